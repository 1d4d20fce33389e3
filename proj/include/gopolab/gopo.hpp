#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gopolab/critics.hpp"
#include "gopolab/function_class.hpp"
#include "gopolab/mdp.hpp"
#include "gopolab/offline_data.hpp"

namespace gopolab {

enum class CriticKind { kVsc, kRoc, kPsc };
std::string to_string(CriticKind kind);
CriticKind critic_from_string(const std::string& name);

struct GopoConfig {
  CriticKind critic = CriticKind::kRoc;
  double beta = 0.0;    // vsc
  double lambda = 0.0;  // roc, psc
  double gamma = 0.0;   // psc
  std::vector<Eigen::VectorXd> log_prior;  // psc; empty -> uniform
  int T = 1;
  double eta = 0.0;
  std::uint64_t seed = 0;
  bool record_trace = true;
};

struct TraceEntry {
  int t = 0;  // 1-based
  CriticOutput critic;
  StageSequence critic_q;   // rendered chain, kept for the regret audit
  double q1_pessimistic = 0.0;  // critic Q_1(s1, pi^t)
  std::optional<double> v1_actor;
  double wall_ms = 0.0;
};

struct GopoTrace {
  std::vector<TraceEntry> entries;
  double eta = 0.0;
};

struct GopoResult {
  std::vector<Policy> mixture;  // pi^1..pi^T, averaged uniformly
  GopoTrace trace;
};

// Thrown when a critic fails inside the loop; carries the 1-based iteration.
class GopoError : public std::runtime_error {
 public:
  GopoError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

GopoResult run(const OfflineDataset& data, const FunctionClass& cls, const GopoConfig& config,
               const EpisodicMdp* eval_mdp = nullptr);

// CSV with columns t, critic_objective, q1_pessimistic, v1_actor, wall_ms. With
// include_wall_time = false the wall_ms column is left blank so traces compare bytewise.
std::string trace_csv(const GopoTrace& trace, bool include_wall_time = true);

struct RegretAudit {
  double regret = 0.0;
  double bound = 0.0;  // 4 H b sqrt(T ln|A|)
  bool preconditions_met = false;  // T >= ln|A|/(e-2), eta <= 1/(2b), |Q| <= b
};

// Sum over t of V^comparator - V^{pi^t} in the induced MDP M(critic Q^t, pi^t).
RegretAudit actor_regret_audit(const GopoResult& result, const EpisodicMdp& eval_mdp,
                               const Policy& comparator);

// V^comparator_1(s1) - mean_t V^{pi^t}_1(s1).
double evaluate_mixture(const std::vector<Policy>& mixture, const EpisodicMdp& eval_mdp,
                        const Policy& comparator);

}  // namespace gopolab
