#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "gopolab/function_class.hpp"
#include "gopolab/mdp.hpp"

namespace gopolab {

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool operator==(const Transition&) const = default;
};

// How the behavior policy of episode k is chosen. Adaptive rules only read
// episodes 1..k-1.
struct BehaviorSchedule {
  enum class Kind { kFixed, kRoundRobin, kGreedySoFar };
  Kind kind = Kind::kFixed;
  std::vector<Policy> policies;  // fixed: one entry; round-robin: the cycle
  double epsilon = 0.3;          // exploration of the greedy-so-far rule

  static BehaviorSchedule fixed(Policy pi);
  static BehaviorSchedule round_robin(std::vector<Policy> cycle);
  static BehaviorSchedule greedy_so_far(double epsilon = 0.3);

  bool operator==(const BehaviorSchedule&) const = default;
};

nlohmann::json to_json(const BehaviorSchedule& schedule);
BehaviorSchedule schedule_from_json(const nlohmann::json& j);

struct OfflineDataset {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int initial_state = 0;
  std::vector<std::vector<Transition>> episodes;  // episodes[k][h]
  BehaviorSchedule schedule;
  std::uint64_t seed = 0;
  std::string mdp_fingerprint;

  int num_episodes() const { return static_cast<int>(episodes.size()); }
  bool operator==(const OfflineDataset&) const = default;
};

// Simulates K episodes. Every random draw at (k, h) comes from a stream keyed by
// (seed, k, h); the behavior policy of episode k depends only on earlier episodes.
OfflineDataset collect(const EpisodicMdp& mdp, const BehaviorSchedule& schedule, int K,
                       std::uint64_t seed);

// Behavior policies mu^1..mu^K as realized by the schedule on this dataset.
std::vector<Policy> realized_behavior(const OfflineDataset& data);
// Exact d^mu = (1/K) sum_k d^{mu^k}.
StageSequence behavior_occupancy(const EpisodicMdp& mdp, const OfflineDataset& data);
// Visit frequencies (counts / K).
StageSequence empirical_occupancy(const OfflineDataset& data);

// (f_h(s,a) - r - f_next(s', pi_{h+1}))^2; the f_next term is zero at the last step.
double td_loss(const StageTable& f_h, const StageTable& f_next, const Policy& pi, int h,
               const Transition& z);

// Per-stage sufficient statistics of the transitions grouped by (s, a, s').
// Rewards inside a group are sorted before summation, so the statistics do not
// depend on episode order.
struct TransitionStats {
  struct Group {
    int s, a, s_next;
    double count;
    double mean_reward;
    double centered_sq;  // sum of (r - mean)^2
  };
  int horizon = 0;
  int num_episodes = 0;
  std::vector<std::vector<Group>> groups;
};
TransitionStats summarize(const OfflineDataset& data);

// L[h](i, j) = sum over the K transitions at step h of the TD loss of
// (candidate i of F_h, candidate j of F_{h+1}). The last stage has one column (f = 0).
struct TdLossMatrix {
  std::vector<Eigen::MatrixXd> loss;
  double at(int h, int i, int j) const { return loss[h](i, j); }
  int horizon() const { return static_cast<int>(loss.size()); }
};

TdLossMatrix build_td_matrix(const TransitionStats& stats, const FunctionClass& cls,
                             const Policy& pi);
TdLossMatrix build_td_matrix(const OfflineDataset& data, const FunctionClass& cls,
                             const Policy& pi);

inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const OfflineDataset& data, const std::string& path);
OfflineDataset load_dataset(const std::string& path);
// Warns on stderr and returns false when the dataset came from a different MDP.
bool check_fingerprint(const OfflineDataset& data, const EpisodicMdp& mdp);

}  // namespace gopolab
