#include "gopolab/mdp.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gopolab {

namespace {

constexpr double kSimplexTol = 1e-12;

void check_simplex(std::span<const double> p, const std::string& what) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ContractViolation(what + ": negative or NaN probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) throw ContractViolation(what + ": does not sum to one");
}

}  // namespace

EpisodicMdp::EpisodicMdp(int num_states, int num_actions, int horizon,
                         std::vector<double> transitions, StageSequence mean_rewards,
                         NoiseModel noise, int initial_state, double bound)
    : num_states_(num_states),
      num_actions_(num_actions),
      horizon_(horizon),
      transitions_(std::move(transitions)),
      rewards_(std::move(mean_rewards)),
      noise_(noise),
      initial_state_(initial_state),
      bound_(bound) {
  validate_structure();
  require(bound_ >= 1.0, "bound b must be at least 1");
  require(noise_.half_width >= 0.0, "noise half-width must be nonnegative");
  for (const auto& r : rewards_)
    require(r.max_abs() <= bound_, "mean reward exceeds the bound b");
  require(max_abs_return() <= bound_ + 1e-12,
          "cumulative reward (including noise) can exceed the bound b");
}

void EpisodicMdp::validate_structure() const {
  require(num_states_ > 0 && num_actions_ > 0 && horizon_ > 0, "MDP sizes must be positive");
  require(initial_state_ >= 0 && initial_state_ < num_states_, "initial state out of range");
  require(transitions_.size() == static_cast<std::size_t>(horizon_) * num_states_ *
                                     num_actions_ * num_states_,
          "transition array has the wrong size");
  require(rewards_.size() == static_cast<std::size_t>(horizon_), "reward stages != horizon");
  for (const auto& r : rewards_)
    require(r.num_states == num_states_ && r.num_actions == num_actions_,
            "reward table shape mismatch");
  for (int h = 0; h < horizon_; ++h)
    for (int s = 0; s < num_states_; ++s)
      for (int a = 0; a < num_actions_; ++a)
        check_simplex(next_state_distribution(h, s, a),
                      "P[" + std::to_string(h) + "][" + std::to_string(s) + "][" +
                          std::to_string(a) + "]");
}

EpisodicMdp EpisodicMdp::with_rewards_unchecked(StageSequence mean_rewards) const {
  EpisodicMdp out = *this;
  out.rewards_ = std::move(mean_rewards);
  require(out.rewards_.size() == static_cast<std::size_t>(horizon_), "reward stages != horizon");
  for (const auto& r : out.rewards_)
    require(r.num_states == num_states_ && r.num_actions == num_actions_,
            "reward table shape mismatch");
  return out;
}

double EpisodicMdp::max_abs_return() const {
  const double w = noise_.max_magnitude();
  std::vector<double> hi(num_states_, 0.0), lo(num_states_, 0.0);
  for (int h = horizon_ - 1; h >= 0; --h) {
    std::vector<double> nhi(num_states_, -kInf), nlo(num_states_, kInf);
    for (int s = 0; s < num_states_; ++s)
      for (int a = 0; a < num_actions_; ++a) {
        double best = -kInf, worst = kInf;
        auto p = next_state_distribution(h, s, a);
        for (int sn = 0; sn < num_states_; ++sn) {
          if (p[sn] <= 0.0) continue;
          best = std::max(best, hi[sn]);
          worst = std::min(worst, lo[sn]);
        }
        nhi[s] = std::max(nhi[s], rewards_[h](s, a) + w + best);
        nlo[s] = std::min(nlo[s], rewards_[h](s, a) - w + worst);
      }
    hi = std::move(nhi);
    lo = std::move(nlo);
  }
  return std::max(std::abs(hi[initial_state_]), std::abs(lo[initial_state_]));
}

Policy::Policy(StageSequence probabilities) : tables_(std::move(probabilities)) {
  require(!tables_.empty(), "policy needs at least one step");
  for (std::size_t h = 0; h < tables_.size(); ++h) {
    require(tables_[h].same_shape(tables_[0]), "policy stage shape mismatch");
    const auto& t = tables_[h];
    for (int s = 0; s < t.num_states; ++s)
      check_simplex({t.values.data() + static_cast<std::size_t>(s) * t.num_actions,
                     static_cast<std::size_t>(t.num_actions)},
                    "pi[" + std::to_string(h) + "][" + std::to_string(s) + "]");
  }
}

Policy Policy::uniform(int num_states, int num_actions, int horizon) {
  return Policy(StageSequence(horizon, StageTable(num_states, num_actions, 1.0 / num_actions)));
}

Policy Policy::deterministic(const std::vector<std::vector<int>>& actions, int num_actions) {
  StageSequence tables;
  for (const auto& row : actions) {
    StageTable t(static_cast<int>(row.size()), num_actions);
    for (std::size_t s = 0; s < row.size(); ++s) {
      require(row[s] >= 0 && row[s] < num_actions, "action index out of range");
      t(static_cast<int>(s), row[s]) = 1.0;
    }
    tables.push_back(std::move(t));
  }
  return Policy(std::move(tables));
}

double Policy::average(int h, const StageTable& f, int s) const {
  const auto& t = tables_[h];
  double acc = 0.0;
  for (int a = 0; a < t.num_actions; ++a) acc += t(s, a) * f(s, a);
  return acc;
}

void check_shapes(const EpisodicMdp& mdp, const Policy& pi) {
  require(pi.horizon() == mdp.horizon() && pi.num_states() == mdp.num_states() &&
              pi.num_actions() == mdp.num_actions(),
          "policy shape does not match the MDP");
}

PolicyEvaluation evaluate_policy(const EpisodicMdp& mdp, const Policy& pi) {
  check_shapes(mdp, pi);
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  PolicyEvaluation out;
  out.initial_state = mdp.initial_state();
  out.q.assign(H, StageTable(S, A));
  out.v.assign(H, std::vector<double>(S, 0.0));
  std::vector<double> v_next(S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double vs = 0.0;
      for (int a = 0; a < A; ++a) {
        auto p = mdp.next_state_distribution(h, s, a);
        double cont = 0.0;
        for (int sn = 0; sn < S; ++sn) cont += p[sn] * v_next[sn];
        out.q[h](s, a) = mdp.reward(h)(s, a) + cont;
        vs += pi(h, s, a) * out.q[h](s, a);
      }
      out.v[h][s] = vs;
    }
    v_next = out.v[h];
  }
  out.occupancy.assign(H, StageTable(S, A));
  for (int a = 0; a < A; ++a)
    out.occupancy[0](mdp.initial_state(), a) = pi(0, mdp.initial_state(), a);
  for (int h = 0; h + 1 < H; ++h) {
    std::vector<double> state_mass(S, 0.0);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const double d = out.occupancy[h](s, a);
        if (d == 0.0) continue;
        auto p = mdp.next_state_distribution(h, s, a);
        for (int sn = 0; sn < S; ++sn) state_mass[sn] += d * p[sn];
      }
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) out.occupancy[h + 1](s, a) = state_mass[s] * pi(h + 1, s, a);
  }
  return out;
}

double initial_value(const EpisodicMdp& mdp, const Policy& pi) {
  return evaluate_policy(mdp, pi).initial_value();
}

StageTable bellman_apply(const EpisodicMdp& mdp, const Policy& pi, const StageTable& f_next,
                         int h) {
  check_shapes(mdp, pi);
  require(h >= 0 && h < mdp.horizon(), "step index out of range");
  const int S = mdp.num_states(), A = mdp.num_actions();
  StageTable out = mdp.reward(h);
  if (h == mdp.horizon() - 1) return out;
  require(f_next.num_states == S && f_next.num_actions == A, "f_next shape mismatch");
  std::vector<double> next_value(S);
  for (int sn = 0; sn < S; ++sn) next_value[sn] = pi.average(h + 1, f_next, sn);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      auto p = mdp.next_state_distribution(h, s, a);
      double cont = 0.0;
      for (int sn = 0; sn < S; ++sn) cont += p[sn] * next_value[sn];
      out(s, a) += cont;
    }
  return out;
}

StageTable bellman_error(const EpisodicMdp& mdp, const Policy& pi, const StageTable& f_h,
                         const StageTable& f_next, int h) {
  return bellman_apply(mdp, pi, f_next, h) - f_h;
}

namespace {

const StageTable& next_or_zero(const StageSequence& q, int h, const StageTable& zero) {
  return h + 1 < static_cast<int>(q.size()) ? q[h + 1] : zero;
}

}  // namespace

EpisodicMdp induced_mdp(const EpisodicMdp& mdp, const StageSequence& q, const Policy& pi) {
  require(static_cast<int>(q.size()) == mdp.horizon(), "Q must have H stages");
  const StageTable zero = mdp.zero_table();
  StageSequence rewards;
  rewards.reserve(q.size());
  for (int h = 0; h < mdp.horizon(); ++h)
    rewards.push_back(mdp.reward(h) - bellman_error(mdp, pi, q[h], next_or_zero(q, h, zero), h));
  return mdp.with_rewards_unchecked(std::move(rewards));
}

double suboptimality(const EpisodicMdp& mdp, const Policy& comparator, const Policy& learned) {
  return initial_value(mdp, comparator) - initial_value(mdp, learned);
}

double suboptimality(const EpisodicMdp& mdp, const Policy& comparator,
                     std::span<const Policy> mixture) {
  require(!mixture.empty(), "mixture must be nonempty");
  double mean = 0.0;
  for (const auto& p : mixture) mean += initial_value(mdp, p);
  mean /= static_cast<double>(mixture.size());
  return initial_value(mdp, comparator) - mean;
}

double check_error_decomposition(const EpisodicMdp& mdp, const StageSequence& q,
                                 const Policy& comparator, const Policy& actor) {
  require(static_cast<int>(q.size()) == mdp.horizon(), "Q must have H stages");
  const StageTable zero = mdp.zero_table();
  const auto comp_eval = evaluate_policy(mdp, comparator);
  const double lhs = comp_eval.initial_value() - initial_value(mdp, actor);

  double bellman_term = 0.0;
  for (int h = 0; h < mdp.horizon(); ++h) {
    const StageTable err = bellman_error(mdp, actor, q[h], next_or_zero(q, h, zero), h);
    for (std::size_t i = 0; i < err.size(); ++i)
      bellman_term += comp_eval.occupancy[h].values[i] * err.values[i];
  }
  const double q_initial = actor.average(0, q[0], mdp.initial_state());
  const EpisodicMdp induced = induced_mdp(mdp, q, actor);
  const double induced_gap = suboptimality(induced, comparator, actor);
  const double rhs = bellman_term + q_initial - initial_value(mdp, actor) + induced_gap;
  return std::abs(lhs - rhs);
}

double performance_difference_residual(const EpisodicMdp& mdp, const Policy& pi,
                                       const Policy& pi_prime) {
  const auto e = evaluate_policy(mdp, pi);
  const auto e_prime = evaluate_policy(mdp, pi_prime);
  double sum = 0.0;
  for (int h = 0; h < mdp.horizon(); ++h)
    for (int s = 0; s < mdp.num_states(); ++s)
      for (int a = 0; a < mdp.num_actions(); ++a)
        sum += e.occupancy[h](s, a) * (e_prime.q[h](s, a) - e_prime.v[h][s]);
  return std::abs(e.initial_value() - e_prime.initial_value() - sum);
}

Policy optimal_policy(const EpisodicMdp& mdp) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  std::vector<std::vector<int>> actions(H, std::vector<int>(S, 0));
  std::vector<double> v_next(S, 0.0), v(S);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double best = -kInf;
      for (int a = 0; a < A; ++a) {
        auto p = mdp.next_state_distribution(h, s, a);
        double q = mdp.reward(h)(s, a);
        for (int sn = 0; sn < S; ++sn) q += p[sn] * v_next[sn];
        if (q > best) {
          best = q;
          actions[h][s] = a;
        }
      }
      v[s] = best;
    }
    v_next = v;
  }
  return Policy::deterministic(actions, A);
}

// ---- serialization ----------------------------------------------------------

namespace {

nlohmann::json table_to_json(const StageTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < t.num_states; ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < t.num_actions; ++a) row.push_back(t(s, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

StageTable table_from_json(const nlohmann::json& rows, int S, int A, const std::string& what) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != S)
    throw ContractViolation(what + ": expected " + std::to_string(S) + " rows");
  StageTable t(S, A);
  for (int s = 0; s < S; ++s) {
    if (!rows[s].is_array() || static_cast<int>(rows[s].size()) != A)
      throw ContractViolation(what + ": expected " + std::to_string(A) + " columns");
    for (int a = 0; a < A; ++a) t(s, a) = rows[s][a].get<double>();
  }
  return t;
}

}  // namespace

nlohmann::json to_json(const EpisodicMdp& mdp) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  nlohmann::json j;
  j["num_states"] = S;
  j["num_actions"] = A;
  j["horizon"] = H;
  j["b"] = mdp.bound();
  j["s1"] = mdp.initial_state();
  nlohmann::json P = nlohmann::json::array();
  for (int h = 0; h < H; ++h) {
    nlohmann::json ph = nlohmann::json::array();
    for (int s = 0; s < S; ++s) {
      nlohmann::json ps = nlohmann::json::array();
      for (int a = 0; a < A; ++a) {
        auto p = mdp.next_state_distribution(h, s, a);
        ps.push_back(std::vector<double>(p.begin(), p.end()));
      }
      ph.push_back(std::move(ps));
    }
    P.push_back(std::move(ph));
  }
  j["P"] = std::move(P);
  nlohmann::json r = nlohmann::json::array();
  for (int h = 0; h < H; ++h) r.push_back(table_to_json(mdp.reward(h)));
  j["r"] = std::move(r);
  j["noise"] = {{"kind", mdp.noise().kind == NoiseModel::Kind::kUniform ? "uniform" : "none"},
                {"half_width", mdp.noise().half_width}};
  return j;
}

EpisodicMdp mdp_from_json(const nlohmann::json& j) {
  try {
    const int S = j.at("num_states").get<int>();
    const int A = j.at("num_actions").get<int>();
    const int H = j.at("horizon").get<int>();
    require(S > 0 && A > 0 && H > 0, "MDP sizes must be positive");
    std::vector<double> P;
    P.reserve(static_cast<std::size_t>(H) * S * A * S);
    const auto& jp = j.at("P");
    require(jp.is_array() && static_cast<int>(jp.size()) == H, "P: expected H stages");
    for (int h = 0; h < H; ++h) {
      require(static_cast<int>(jp[h].size()) == S, "P: expected S rows per stage");
      for (int s = 0; s < S; ++s) {
        require(static_cast<int>(jp[h][s].size()) == A, "P: expected A entries per state");
        for (int a = 0; a < A; ++a) {
          const auto& dist = jp[h][s][a];
          require(static_cast<int>(dist.size()) == S, "P: expected S next-state probabilities");
          for (int sn = 0; sn < S; ++sn) P.push_back(dist[sn].get<double>());
        }
      }
    }
    StageSequence r;
    const auto& jr = j.at("r");
    require(jr.is_array() && static_cast<int>(jr.size()) == H, "r: expected H stages");
    for (int h = 0; h < H; ++h) r.push_back(table_from_json(jr[h], S, A, "r"));
    NoiseModel noise;
    if (j.contains("noise")) {
      const auto kind = j["noise"].at("kind").get<std::string>();
      if (kind == "uniform") {
        noise.kind = NoiseModel::Kind::kUniform;
      } else if (kind != "none") {
        throw ContractViolation("noise.kind must be 'none' or 'uniform'");
      }
      noise.half_width = j["noise"].value("half_width", 0.0);
    }
    return EpisodicMdp(S, A, H, std::move(P), std::move(r), noise, j.at("s1").get<int>(),
                       j.at("b").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed MDP document: ") + e.what());
  }
}

nlohmann::json to_json(const Policy& pi) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : pi.tables()) j.push_back(table_to_json(t));
  return j;
}

Policy policy_from_json(const nlohmann::json& j) {
  require(j.is_array() && !j.empty(), "policy document must be a nonempty array");
  const int S = static_cast<int>(j[0].size());
  const int A = S > 0 ? static_cast<int>(j[0][0].size()) : 0;
  StageSequence tables;
  for (const auto& stage : j) tables.push_back(table_from_json(stage, S, A, "policy"));
  return Policy(std::move(tables));
}

void save_mdp(const EpisodicMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(mdp).dump(1) << '\n';
}

EpisodicMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(path + ": " + e.what());
  }
  return mdp_from_json(j);
}

std::string fingerprint(const EpisodicMdp& mdp) {
  const std::string doc = to_json(mdp).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gopolab
