#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gopolab/common.hpp"
#include "gopolab/mdp.hpp"

namespace gopolab {

// Generating data for a class obtained by discretizing a linear model
// {(s,a) -> <phi_h(s,a), w> : ||w||_2 <= radius_h} on a cubic grid.
struct LinearNet {
  std::vector<Eigen::MatrixXd> phi;                  // phi[h] has S*A rows (row s*A + a), d columns
  std::vector<std::vector<Eigen::VectorXd>> weights; // weights[h][i] generates candidate i
  std::vector<double> radius;                        // per-stage weight-ball radius, <= bound
  double net_resolution = 0.0;                       // covering radius of the grid in l2

  int dim() const { return phi.empty() ? 0 : static_cast<int>(phi[0].cols()); }
};

// Product class F_1 x ... x F_H of finite candidate menus of stage functions.
class FunctionClass {
 public:
  enum class Provenance { kNativeFinite, kLinearNet };

  FunctionClass(double bound, std::vector<std::vector<StageTable>> candidates);

  // Grid net over each stage's weight ball. The grid spacing is chosen so that
  // every point of the ball lies within net_resolution of a grid point.
  static FunctionClass linear_net(double bound, std::vector<Eigen::MatrixXd> phi,
                                  std::vector<double> radius, double net_resolution,
                                  int num_actions);

  int horizon() const { return static_cast<int>(candidates_.size()); }
  int size(int h) const { return static_cast<int>(candidates_[h].size()); }
  std::vector<int> sizes() const;
  const StageTable& candidate(int h, int i) const { return candidates_[h][i]; }
  const std::vector<StageTable>& stage(int h) const { return candidates_[h]; }
  double bound() const { return bound_; }
  Provenance provenance() const { return linear_ ? Provenance::kLinearNet : Provenance::kNativeFinite; }
  const std::optional<LinearNet>& linear() const { return linear_; }

  StageSequence render(const std::vector<int>& chain) const;

  bool operator==(const FunctionClass& o) const {
    return bound_ == o.bound_ && candidates_ == o.candidates_;
  }

 private:
  double bound_;
  std::vector<std::vector<StageTable>> candidates_;
  std::optional<LinearNet> linear_;
};

nlohmann::json to_json(const FunctionClass& cls);
FunctionClass function_class_from_json(const nlohmann::json& j);
void save_class(const FunctionClass& cls, const std::string& path);
FunctionClass load_class(const std::string& path);

// Actor state of the multiplicative-weights update. The rendered policy is
// pi_h(a|s) proportional to exp(eta * logit_sum[h](s,a)).
struct SoftPolicyState {
  StageSequence logit_sum;
  double eta = 0.0;
  int t = 0;
  // member_counts[h][i]: how many times candidate i of F_h was added. Empty when
  // updates came from raw tables rather than class members.
  std::vector<std::vector<int>> member_counts;

  static SoftPolicyState initial(int num_states, int num_actions, int horizon, double eta);
  Policy policy() const;
};

SoftPolicyState softmax_update(const SoftPolicyState& state, const StageSequence& critic_q);
// Same update, with the chosen candidates recorded so class membership can be audited.
SoftPolicyState softmax_update(const SoftPolicyState& state, const FunctionClass& cls,
                               const std::vector<int>& chain);

// Softmax of eta * logits per state, in log space with max subtraction.
StageTable softmax_rows(const StageTable& logits, double eta);

struct EtaChoice {
  double eta = 0.0;
  bool meets_horizon_requirement = true;  // T >= ln|A| / (e - 2)
};
EtaChoice default_eta(double b, int T, int num_actions);

// Per-stage mask over (s, a) cells, row-major like StageTable.
using Support = std::vector<std::vector<char>>;
Support full_support(int horizon, int num_states, int num_actions);
Support support_of(const StageSequence& occupancy);

struct Projection {
  std::vector<int> index;
  std::vector<double> error;
};

// Per stage, the candidate with the smallest sup-distance to target over the support.
Projection project_value(const FunctionClass& cls, const StageSequence& target,
                         const Support& support);

struct BellmanProjection {
  int index = 0;
  double error = 0.0;
};
// Candidate at step h closest in sup norm to T_h^pi f, f = candidate(h+1, next_index).
// At the last step next_index is ignored.
BellmanProjection project_bellman(const FunctionClass& cls, const EpisodicMdp& mdp,
                                  const Policy& pi, int next_index, int h);

struct MisspecReport {
  std::vector<double> xi;
  std::vector<double> nu;
  int num_probe_policies = 0;
};

// Random member of the induced soft policy class: t <= max_terms random
// candidates summed per stage, eta uniform on [0, 1].
Policy sample_soft_policy(const FunctionClass& cls, int max_terms, CounterRng& rng);

// Sampled lower bounds on the realizability and Bellman-closedness errors.
MisspecReport estimate_misspecification(const FunctionClass& cls, const EpisodicMdp& mdp,
                                        int probe_count, int max_terms, std::uint64_t seed,
                                        const std::optional<Support>& support = std::nullopt);

struct CoveringReport {
  double d_F = 0.0;
  double d_Pi = 0.0;
  double d0_bound = 0.0;
  double epsilon = 0.0;
  int T = 0;
};
CoveringReport covering_dims(const FunctionClass& cls, double epsilon, int T);

}  // namespace gopolab
