#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gopolab/function_class.hpp"
#include "gopolab/mdp.hpp"
#include "gopolab/offline_data.hpp"

namespace gopolab {

struct ChiResult {
  double value = 0.0;  // may be kInf
  int witness = -1;    // index into the witness class achieving the max; -1 if all terms vanish
};

// max over g of ((E_q g)^2 - eps)_+ / E_p[g^2]. A positive numerator over a zero
// denominator is +inf; a vanishing numerator contributes 0.
ChiResult chi_discrepancy(const std::vector<StageTable>& witnesses, const StageTable& q,
                          const StageTable& p, double epsilon);

struct DiversityValue {
  double value = 0.0;
  std::vector<double> per_stage;
  // Witness f_i - f_j per stage; (-1, -1) when every pair contributes 0.
  std::vector<std::pair<int, int>> witness;
};

// Maximum over steps of the discrepancy under the difference class F_h - F_h.
DiversityValue data_diversity(const FunctionClass& cls, const StageSequence& d_pi,
                              const StageSequence& d_mu, double epsilon);

// max_{h,s,a} d_pi / d_mu with x/0 = inf for x > 0 and 0/0 = 0.
double concentrability(const StageSequence& d_pi, const StageSequence& d_mu);

// Per step, sup_x x'E_pi[phi phi']x / x'E_mu[phi phi']x. Eigenvalues of the
// mu-matrix below 1e-10 of the largest are treated as zero.
std::vector<double> relative_condition_number(const std::vector<Eigen::MatrixXd>& phi,
                                              const StageSequence& d_pi,
                                              const StageSequence& d_mu);

// Discrepancy of the continuous difference class {<phi_h, w> : ||w|| <= 2 radius_h}.
// eps > 0 is solved by bisection on C to 1e-8 relative tolerance.
std::vector<double> linear_ball_diversity(const std::vector<Eigen::MatrixXd>& phi,
                                          const std::vector<double>& radius,
                                          const StageSequence& d_pi, const StageSequence& d_mu,
                                          double epsilon);

struct LinearCoverage {
  double c_pevi = 0.0;
  double c_pacle = 0.0;
  double c_bcp = 0.0;
  double c_pevi_adv = 0.0;
  double lambda_reg = 1.0;
  int variance_clamps = 0;  // variance weights raised to the 1e-12 floor
};

// Sigma_h = lambda I + sum_k phi phi' over the dataset, Lambda_h the same with
// variance weights 1/[V_h V^pi_{h+1}], and the mu-averaged second-moment matrix
// taken from d_mu.
LinearCoverage linear_coverage_report(const OfflineDataset& data,
                                      const std::vector<Eigen::MatrixXd>& phi,
                                      const PolicyEvaluation& pi_eval, const EpisodicMdp& mdp,
                                      const StageSequence& d_mu, double lambda_reg = 1.0);

struct DecouplingCheck {
  double lhs = 0.0;        // sum_h E_pi[T^pi_tilde f_{h+1} - f_h]
  double rhs = 0.0;
  double margin = 0.0;     // rhs - lhs
  double diversity = 0.0;  // C(pi; eps) used on the right side
};

// Both sides of the decoupling inequality with exact expectations. d_mu is the
// mixture behavior occupancy, K the number of episodes it averages, nu[h] an
// upper bound on the Bellman-closedness error.
DecouplingCheck check_decoupling(const FunctionClass& cls, const EpisodicMdp& mdp,
                                 const Policy& pi, const Policy& pi_tilde,
                                 const std::vector<int>& f, const StageSequence& d_mu, int K,
                                 const std::vector<double>& nu, double lambda, double epsilon);

struct DiversityReport {
  std::vector<double> epsilons;
  std::vector<DiversityValue> diversity;  // one per epsilon
  double concentrability = 0.0;
  // Linear provenance only.
  std::vector<double> relative_condition;
  std::vector<double> ball_diversity;  // one per epsilon
  std::optional<LinearCoverage> linear;
};

DiversityReport diversity_report(const FunctionClass& cls, const EpisodicMdp& mdp,
                                 const Policy& pi, const StageSequence& d_mu,
                                 const std::vector<double>& epsilons,
                                 const OfflineDataset* data = nullptr, double lambda_reg = 1.0);

std::string diversity_csv_header();
// One row per epsilon. Infinities are written as "inf"; linear-only columns are blank otherwise.
std::vector<std::string> diversity_csv_rows(const DiversityReport& report,
                                            const std::string& pi_label,
                                            const std::string& mu_label);

}  // namespace gopolab
