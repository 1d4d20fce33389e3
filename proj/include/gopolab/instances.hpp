#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gopolab/function_class.hpp"
#include "gopolab/mdp.hpp"

namespace gopolab {

// Dense random transitions, per-step mean rewards uniform in
// [0, b/H - noise_half_width], uniform reward noise of the given half-width.
EpisodicMdp random_mdp(int num_states, int num_actions, int horizon, double b,
                       std::uint64_t seed, double noise_half_width = 0.0);

// States on a line, action 0 moves left and action 1 right, each failing with
// probability `slip`. Reward b/H for any action taken at the right end.
EpisodicMdp gridworld_chain(int length, int horizon, double b, double slip = 0.1);

// Start state 0 branches into two absorbing arms (state 1 via action 0, state 2
// via action 1). Arm 2 pays b/H per step, arm 1 pays half that.
EpisodicMdp corridor(int horizon, double b, int num_actions = 2);
// Behavior for the corridor: action 1 at the start state with probability `coverage`.
Policy corridor_behavior(int horizon, double coverage, int num_actions = 2);

Policy random_policy(int num_states, int num_actions, int horizon, CounterRng& rng);
StageSequence random_q(int num_states, int num_actions, int horizon, double bound,
                       CounterRng& rng);

// 4-state, 2-action, H = 3 instance where only the first action matters
// (reward gap 0.5 at the first step); later steps have action-independent
// dynamics and uniform reward noise, b = 1.
EpisodicMdp closed_tail_mdp();
// Realizable and exactly Bellman-closed for every policy: later stages hold the
// three shifts Q_h + c, c in {-0.1, 0, 0.1}; the first stage adds 13
// distractors that lower one action's value at s1 or raise it (16 candidates).
FunctionClass closed_tail_class(const EpisodicMdp& mdp);

// Class closed under the Bellman operator of pi_tilde: stage h holds
// `random_per_stage` random tables plus the images of every stage-(h+1)
// candidate. Random tables at step h (0-based) lie in +-b(H-h)/(H+1), so the
// class stays within b whenever per-step rewards lie in [0, b/H].
FunctionClass bellman_closed_class(const EpisodicMdp& mdp, const Policy& pi_tilde,
                                   int random_per_stage, CounterRng& rng);

struct LinearInstance {
  EpisodicMdp mdp;
  std::vector<Eigen::MatrixXd> phi;  // phi[h] is (S*A) x d
  // Per-stage weight radius: every Q^pi_h and every Bellman image of the
  // stage-(h+1) ball is phi_h w with ||w|| <= radius[h] - margin.
  std::vector<double> radius;
};

// Linear MDP: phi_h(s, a) on the probability simplex (shrunk toward its center
// by `shrink`), P_h(s'|s,a) = sum_i phi_i mu_{h,i}(s'), r_h = <phi, theta_h> with
// theta_h entries in [0, theta_max]. Radii follow
// r_h = ||theta_h|| + sqrt(d) r_{h+1} + margin and must not exceed b.
LinearInstance linear_mdp(int num_states, int num_actions, int horizon, int dim, double b,
                          std::uint64_t seed, double theta_max, double margin,
                          double shrink = 0.5);

// Weight vector w with Q_h = phi_h w for Q from evaluate_policy on a linear MDP.
Eigen::VectorXd fit_linear(const Eigen::MatrixXd& phi, const StageTable& q);

}  // namespace gopolab
