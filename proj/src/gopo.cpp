#include "gopolab/gopo.hpp"

#include <chrono>
#include <numbers>
#include <sstream>

namespace gopolab {

std::string to_string(CriticKind kind) {
  switch (kind) {
    case CriticKind::kVsc: return "vsc";
    case CriticKind::kRoc: return "roc";
    case CriticKind::kPsc: return "psc";
  }
  return "unknown";
}

CriticKind critic_from_string(const std::string& name) {
  if (name == "vsc") return CriticKind::kVsc;
  if (name == "roc") return CriticKind::kRoc;
  if (name == "psc") return CriticKind::kPsc;
  throw ContractViolation("unknown critic '" + name + "'");
}

GopoResult run(const OfflineDataset& data, const FunctionClass& cls, const GopoConfig& config,
               const EpisodicMdp* eval_mdp) {
  require(config.T >= 1, "T must be at least 1");
  require(config.eta >= 0.0, "eta must be nonnegative");
  require(cls.horizon() == data.horizon, "class and dataset horizons differ");
  if (eval_mdp) require(eval_mdp->horizon() == data.horizon, "evaluation MDP horizon differs");

  const TransitionStats stats = summarize(data);
  const double b = cls.bound();
  GopoResult result;
  result.trace.eta = config.eta;
  SoftPolicyState actor =
      SoftPolicyState::initial(data.num_states, data.num_actions, data.horizon, config.eta);

  for (int t = 1; t <= config.T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    Policy pi = actor.policy();
    const TdLossMatrix td = build_td_matrix(stats, cls, pi);
    const ChainPotential pot =
        make_potential(td, cls, pi, data.initial_state,
                       config.critic == CriticKind::kPsc ? config.log_prior
                                                         : std::vector<Eigen::VectorXd>{});
    CriticOutput out;
    try {
      switch (config.critic) {
        case CriticKind::kVsc: out = vsc(pot, config.beta); break;
        case CriticKind::kRoc: out = roc(pot, config.lambda); break;
        case CriticKind::kPsc:
          out = psc(pot, config.lambda, config.gamma, derive_seed(config.seed, t));
          out.parameters["gamma_in_theorem_range"] = config.gamma <= theorem_gamma_psc(b);
          break;
      }
    } catch (const std::exception& e) {
      throw GopoError(t, e.what());
    }

    TraceEntry entry;
    entry.t = t;
    entry.q1_pessimistic = pot.initial_value[out.chain[0]];
    if (eval_mdp) entry.v1_actor = initial_value(*eval_mdp, pi);
    actor = softmax_update(actor, cls, out.chain);
    if (config.record_trace) entry.critic_q = cls.render(out.chain);
    entry.critic = std::move(out);
    entry.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.trace.entries.push_back(std::move(entry));
    result.mixture.push_back(std::move(pi));
  }
  return result;
}

std::string trace_csv(const GopoTrace& trace, bool include_wall_time) {
  std::ostringstream os;
  os << "t,critic_objective,q1_pessimistic,v1_actor,wall_ms\n";
  for (const auto& e : trace.entries) {
    os << e.t << ',' << format_double(e.critic.objective) << ',' << format_double(e.q1_pessimistic)
       << ',';
    if (e.v1_actor) os << format_double(*e.v1_actor);
    os << ',';
    if (include_wall_time) os << format_double(e.wall_ms);
    os << '\n';
  }
  return os.str();
}

RegretAudit actor_regret_audit(const GopoResult& result, const EpisodicMdp& eval_mdp,
                               const Policy& comparator) {
  const auto& entries = result.trace.entries;
  require(entries.size() == result.mixture.size(), "trace and mixture lengths differ");
  const int T = static_cast<int>(entries.size());
  const int A = eval_mdp.num_actions();
  const double b = eval_mdp.bound();
  RegretAudit out;
  double max_q = 0.0;
  for (int t = 0; t < T; ++t) {
    require(!entries[t].critic_q.empty(), "regret audit needs a recorded trace");
    for (const auto& stage : entries[t].critic_q) max_q = std::max(max_q, stage.max_abs());
    const EpisodicMdp induced = induced_mdp(eval_mdp, entries[t].critic_q, result.mixture[t]);
    out.regret += initial_value(induced, comparator) - initial_value(induced, result.mixture[t]);
  }
  const double log_a = std::log(static_cast<double>(A));
  out.bound = 4.0 * eval_mdp.horizon() * b * std::sqrt(T * log_a);
  out.preconditions_met = T >= log_a / (std::numbers::e - 2.0) &&
                          result.trace.eta <= 1.0 / (2.0 * b) && max_q <= b + 1e-12;
  return out;
}

double evaluate_mixture(const std::vector<Policy>& mixture, const EpisodicMdp& eval_mdp,
                        const Policy& comparator) {
  return suboptimality(eval_mdp, comparator, std::span<const Policy>(mixture));
}

}  // namespace gopolab
