#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gopolab/function_class.hpp"
#include "gopolab/offline_data.hpp"

namespace gopolab {

// Pairwise chain structure shared by all three critics: consecutive candidate
// choices (i_h, i_{h+1}) interact only through the stage-h TD loss, and the
// initial value depends on i_1 alone.
struct ChainPotential {
  std::vector<Eigen::MatrixXd> loss;          // loss[h](i, j); last stage has one column
  std::vector<Eigen::VectorXd> column_min;    // column_min[h][j] = min_i loss[h](i, j)
  Eigen::VectorXd initial_value;              // v1[i] = f_i(s1, pi_1)
  std::vector<Eigen::VectorXd> log_prior;     // normalized per stage

  int horizon() const { return static_cast<int>(loss.size()); }
  int size(int h) const { return static_cast<int>(loss[h].rows()); }
  int next_size(int h) const { return static_cast<int>(loss[h].cols()); }
  // Bias-adjusted loss L[h](i,j) - m[h][j].
  double excess(int h, int i, int j) const { return loss[h](i, j) - column_min[h][j]; }
};

// log_prior empty -> uniform.
ChainPotential make_potential(const TdLossMatrix& td, const FunctionClass& cls, const Policy& pi,
                              int initial_state,
                              std::vector<Eigen::VectorXd> log_prior = {});
// Builds a potential from raw pieces (used by tests and the oracle sweeps).
ChainPotential make_potential(std::vector<Eigen::MatrixXd> loss, Eigen::VectorXd initial_value,
                              std::vector<Eigen::VectorXd> log_prior = {});

struct CriticOutput {
  std::string kind;
  std::vector<int> chain;
  double objective = 0.0;
  std::vector<int> version_space_sizes;  // vsc: candidates on some feasible chain, per stage
  double log_partition = 0.0;            // psc: log normalizer of the chain posterior
  nlohmann::json parameters;
};

nlohmann::json to_json(const CriticOutput& out);

class EmptyVersionSpace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Most pessimistic chain among those whose every stage is within beta of the
// per-column loss minimum. Lexicographically smallest chain among ties.
CriticOutput vsc(const ChainPotential& pot, double beta);

// Exact minimizer of lambda * v1[i_1] + sum_h excess(h, i_h, i_{h+1}) by backward DP.
CriticOutput roc(const ChainPotential& pot, double lambda);

// One exact draw from the chain posterior
//   p(i_1..i_H) ~ exp(-lambda v1[i_1]) prod_h p0_h(i_h) exp(-gamma L_h) / E_{p0_h} exp(-gamma L_h).
CriticOutput psc(const ChainPotential& pot, double lambda, double gamma, std::uint64_t seed);

struct ChainMarginals {
  std::vector<Eigen::VectorXd> stage;  // stage[h][i] = P(i_h = i)
  double log_partition = 0.0;
};
ChainMarginals psc_marginals(const ChainPotential& pot, double lambda, double gamma);

// Full enumeration over all chains (row-major in (i_1, ..., i_H)); refuses more
// than max_chains chains.
inline constexpr double kBruteForceLimit = 1e6;
struct BruteForceResult {
  CriticOutput best;                      // vsc / roc
  std::vector<double> probability;        // psc: normalized joint table
};
BruteForceResult brute_force_vsc(const ChainPotential& pot, double beta);
BruteForceResult brute_force_roc(const ChainPotential& pot, double lambda);
BruteForceResult brute_force_psc(const ChainPotential& pot, double lambda, double gamma);
std::vector<int> decode_chain(const ChainPotential& pot, std::size_t flat);

// Parameter choices derived from the guarantees, with their O(.) constants set to
// `multiplier` (default 1).
double theorem_beta(double b, int K, double epsilon, double xi_max, int H, double d_tilde,
                    double delta, double multiplier = 1.0);
double theorem_lambda_roc(double b, int K, double epsilon, int H, double d_tilde, double delta,
                          double assumed_diversity, double multiplier = 1.0);
double theorem_gamma_psc(double b);
double theorem_lambda_psc(double b, int K, double epsilon, int H, double d_tilde_ps,
                          double delta, double gamma, double assumed_diversity,
                          double multiplier = 1.0);

}  // namespace gopolab
