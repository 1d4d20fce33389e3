#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gopolab/common.hpp"

namespace gopolab {

struct NoiseModel {
  enum class Kind { kNone, kUniform };
  Kind kind = Kind::kNone;
  double half_width = 0.0;  // uniform on [-w, w], added to the mean reward

  double max_magnitude() const { return kind == Kind::kUniform ? half_width : 0.0; }
  bool operator==(const NoiseModel&) const = default;
};

// Finite episodic time-inhomogeneous MDP. Steps are 0-based internally
// (h = 0..H-1); the value at step H is identically zero.
class EpisodicMdp {
 public:
  // Validates every invariant: stochastic transitions, |r| <= b, b >= 1 and
  // the almost-sure bound on the cumulative reward including noise.
  EpisodicMdp(int num_states, int num_actions, int horizon, std::vector<double> transitions,
              StageSequence mean_rewards, NoiseModel noise, int initial_state, double bound);

  // Same transitions and bound, rewards replaced without any boundedness check.
  // Used for induced MDPs, whose rewards may exceed the bound.
  EpisodicMdp with_rewards_unchecked(StageSequence mean_rewards) const;

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int horizon() const { return horizon_; }
  int initial_state() const { return initial_state_; }
  double bound() const { return bound_; }
  const NoiseModel& noise() const { return noise_; }
  const StageTable& reward(int h) const { return rewards_[h]; }
  const StageSequence& rewards() const { return rewards_; }
  const std::vector<double>& transitions() const { return transitions_; }

  std::span<const double> next_state_distribution(int h, int s, int a) const {
    return {transitions_.data() + offset(h, s, a), static_cast<std::size_t>(num_states_)};
  }
  double transition(int h, int s, int a, int s_next) const {
    return transitions_[offset(h, s, a) + s_next];
  }

  // Largest |sum of realized rewards| over trajectories reachable from s1.
  double max_abs_return() const;

  StageTable zero_table() const { return StageTable(num_states_, num_actions_); }

  bool operator==(const EpisodicMdp&) const = default;

 private:
  EpisodicMdp() = default;
  std::size_t offset(int h, int s, int a) const {
    return ((static_cast<std::size_t>(h) * num_states_ + s) * num_actions_ + a) * num_states_;
  }
  void validate_structure() const;

  int num_states_ = 0;
  int num_actions_ = 0;
  int horizon_ = 0;
  std::vector<double> transitions_;
  StageSequence rewards_;
  NoiseModel noise_;
  int initial_state_ = 0;
  double bound_ = 1.0;
};

// Time-inhomogeneous stochastic policy: one action simplex per (h, s).
class Policy {
 public:
  Policy() = default;
  explicit Policy(StageSequence probabilities);

  static Policy uniform(int num_states, int num_actions, int horizon);
  // actions[h][s] is the chosen action.
  static Policy deterministic(const std::vector<std::vector<int>>& actions, int num_actions);

  int horizon() const { return static_cast<int>(tables_.size()); }
  int num_states() const { return tables_.empty() ? 0 : tables_[0].num_states; }
  int num_actions() const { return tables_.empty() ? 0 : tables_[0].num_actions; }
  double operator()(int h, int s, int a) const { return tables_[h](s, a); }
  const StageTable& stage(int h) const { return tables_[h]; }
  const StageSequence& tables() const { return tables_; }
  // Expected value of a stage function under this policy's step-h action distribution.
  double average(int h, const StageTable& f, int s) const;

  bool operator==(const Policy&) const = default;

 private:
  StageSequence tables_;
};

struct PolicyEvaluation {
  StageSequence q;                         // Q[h](s, a)
  std::vector<std::vector<double>> v;      // V[h][s]
  StageSequence occupancy;                 // d[h](s, a), sums to one per step
  int initial_state = 0;

  double initial_value() const { return v.front()[initial_state]; }
};

void check_shapes(const EpisodicMdp& mdp, const Policy& pi);

PolicyEvaluation evaluate_policy(const EpisodicMdp& mdp, const Policy& pi);
double initial_value(const EpisodicMdp& mdp, const Policy& pi);

// r_h + E[f_next(s', pi_{h+1})]; at the last step the result is r_{H-1} and f_next is ignored.
StageTable bellman_apply(const EpisodicMdp& mdp, const Policy& pi, const StageTable& f_next,
                         int h);
StageTable bellman_error(const EpisodicMdp& mdp, const Policy& pi, const StageTable& f_h,
                         const StageTable& f_next, int h);

// MDP whose rewards are shifted by the Bellman error of q under pi, so that q
// is exactly the action-value function of pi there.
EpisodicMdp induced_mdp(const EpisodicMdp& mdp, const StageSequence& q, const Policy& pi);

double suboptimality(const EpisodicMdp& mdp, const Policy& comparator, const Policy& learned);
// Uniform mixture over members.
double suboptimality(const EpisodicMdp& mdp, const Policy& comparator,
                     std::span<const Policy> mixture);

double check_error_decomposition(const EpisodicMdp& mdp, const StageSequence& q,
                                 const Policy& comparator, const Policy& actor);

// |V^pi - V^pi' - sum_h E_pi[Q^pi'_h - V^pi'_h]|
double performance_difference_residual(const EpisodicMdp& mdp, const Policy& pi,
                                       const Policy& pi_prime);

// Greedy backward induction; ties go to the lowest action index.
Policy optimal_policy(const EpisodicMdp& mdp);

nlohmann::json to_json(const EpisodicMdp& mdp);
EpisodicMdp mdp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Policy& pi);
Policy policy_from_json(const nlohmann::json& j);

void save_mdp(const EpisodicMdp& mdp, const std::string& path);
EpisodicMdp load_mdp(const std::string& path);
// FNV-1a hash of the serialized document, as 16 hex digits.
std::string fingerprint(const EpisodicMdp& mdp);

}  // namespace gopolab
