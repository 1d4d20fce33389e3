#include "gopolab/function_class.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>

namespace gopolab {

FunctionClass::FunctionClass(double bound, std::vector<std::vector<StageTable>> candidates)
    : bound_(bound), candidates_(std::move(candidates)) {
  require(!candidates_.empty(), "function class needs at least one stage");
  const auto& ref = candidates_[0].empty() ? StageTable() : candidates_[0][0];
  for (std::size_t h = 0; h < candidates_.size(); ++h) {
    require(!candidates_[h].empty(), "candidate list is empty at stage " + std::to_string(h));
    for (const auto& f : candidates_[h]) {
      require(f.same_shape(ref), "candidate shape mismatch at stage " + std::to_string(h));
      require(f.max_abs() <= bound_ + 1e-12,
              "candidate exceeds the bound at stage " + std::to_string(h));
    }
  }
}

FunctionClass FunctionClass::linear_net(double bound, std::vector<Eigen::MatrixXd> phi,
                                        std::vector<double> radius, double net_resolution,
                                        int num_actions) {
  require(!phi.empty() && phi.size() == radius.size(), "phi and radius must cover every stage");
  require(net_resolution > 0.0, "net resolution must be positive");
  const int d = static_cast<int>(phi[0].cols());
  require(d >= 1 && phi[0].rows() % num_actions == 0, "feature matrix shape mismatch");
  const int S = static_cast<int>(phi[0].rows()) / num_actions;
  const double spacing = 2.0 * net_resolution / std::sqrt(static_cast<double>(d));

  LinearNet net;
  net.phi = phi;
  net.radius = radius;
  net.net_resolution = net_resolution;
  std::vector<std::vector<StageTable>> candidates(phi.size());
  for (std::size_t h = 0; h < phi.size(); ++h) {
    require(radius[h] > 0.0 && radius[h] <= bound, "net radius must lie in (0, b]");
    require(phi[h].rows() == phi[0].rows() && phi[h].cols() == d, "feature shape mismatch");
    const int m = static_cast<int>(std::floor(radius[h] / spacing));
    std::vector<int> k(d, -m);
    std::vector<Eigen::VectorXd> ws;
    for (;;) {
      Eigen::VectorXd w(d);
      for (int c = 0; c < d; ++c) w[c] = spacing * k[c];
      if (w.norm() <= radius[h]) ws.push_back(w);
      int c = d - 1;
      while (c >= 0 && k[c] == m) k[c--] = -m;
      if (c < 0) break;
      ++k[c];
    }
    for (const auto& w : ws) {
      StageTable f(S, num_actions);
      const Eigen::VectorXd vals = phi[h] * w;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < num_actions; ++a) f(s, a) = vals[s * num_actions + a];
      candidates[h].push_back(std::move(f));
    }
    net.weights.push_back(std::move(ws));
  }
  FunctionClass cls(bound, std::move(candidates));
  cls.linear_ = std::move(net);
  return cls;
}

std::vector<int> FunctionClass::sizes() const {
  std::vector<int> out;
  for (const auto& c : candidates_) out.push_back(static_cast<int>(c.size()));
  return out;
}

StageSequence FunctionClass::render(const std::vector<int>& chain) const {
  require(static_cast<int>(chain.size()) == horizon(), "chain length != horizon");
  StageSequence out;
  for (int h = 0; h < horizon(); ++h) {
    require(chain[h] >= 0 && chain[h] < size(h), "candidate index out of range");
    out.push_back(candidates_[h][chain[h]]);
  }
  return out;
}

// ---- serialization ----------------------------------------------------------

nlohmann::json to_json(const FunctionClass& cls) {
  nlohmann::json j;
  j["bound"] = cls.bound();
  const auto& first = cls.candidate(0, 0);
  j["num_states"] = first.num_states;
  j["num_actions"] = first.num_actions;
  nlohmann::json stages = nlohmann::json::array();
  for (int h = 0; h < cls.horizon(); ++h) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : cls.stage(h)) list.push_back(f.values);
    stages.push_back(std::move(list));
  }
  j["candidates"] = std::move(stages);
  if (const auto& net = cls.linear()) {
    nlohmann::json p;
    p["kind"] = "linear-net";
    p["net_resolution"] = net->net_resolution;
    p["radius"] = net->radius;
    nlohmann::json phis = nlohmann::json::array();
    for (const auto& m : net->phi) {
      nlohmann::json rows = nlohmann::json::array();
      for (int r = 0; r < m.rows(); ++r) {
        std::vector<double> row(m.cols());
        for (int c = 0; c < m.cols(); ++c) row[c] = m(r, c);
        rows.push_back(row);
      }
      phis.push_back(std::move(rows));
    }
    p["phi"] = std::move(phis);
    nlohmann::json ws = nlohmann::json::array();
    for (const auto& stage : net->weights) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& w : stage) list.push_back(std::vector<double>(w.data(), w.data() + w.size()));
      ws.push_back(std::move(list));
    }
    p["weights"] = std::move(ws);
    j["provenance"] = std::move(p);
  } else {
    j["provenance"] = {{"kind", "native-finite"}};
  }
  return j;
}

FunctionClass function_class_from_json(const nlohmann::json& j) {
  try {
    const double bound = j.at("bound").get<double>();
    const int S = j.at("num_states").get<int>();
    const int A = j.at("num_actions").get<int>();
    const auto kind = j.at("provenance").at("kind").get<std::string>();
    if (kind == "linear-net") {
      const auto& p = j["provenance"];
      std::vector<Eigen::MatrixXd> phi;
      for (const auto& rows : p.at("phi")) {
        const int n = static_cast<int>(rows.size());
        const int d = n > 0 ? static_cast<int>(rows[0].size()) : 0;
        Eigen::MatrixXd m(n, d);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < d; ++c) m(r, c) = rows[r][c].get<double>();
        phi.push_back(std::move(m));
      }
      FunctionClass cls = FunctionClass::linear_net(
          bound, std::move(phi), p.at("radius").get<std::vector<double>>(),
          p.at("net_resolution").get<double>(), A);
      require(to_json(cls)["candidates"] == j.at("candidates"),
              "linear-net candidates do not match their generating weights");
      return cls;
    }
    require(kind == "native-finite", "unknown provenance kind '" + kind + "'");
    std::vector<std::vector<StageTable>> candidates;
    for (const auto& list : j.at("candidates")) {
      std::vector<StageTable> stage;
      for (const auto& vals : list) {
        StageTable f(S, A);
        f.values = vals.get<std::vector<double>>();
        require(f.values.size() == static_cast<std::size_t>(S) * A, "candidate has wrong size");
        stage.push_back(std::move(f));
      }
      candidates.push_back(std::move(stage));
    }
    return FunctionClass(bound, std::move(candidates));
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed function class document: ") + e.what());
  }
}

void save_class(const FunctionClass& cls, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(cls).dump() << '\n';
}

FunctionClass load_class(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(path + ": " + e.what());
  }
  return function_class_from_json(j);
}

// ---- soft policies ----------------------------------------------------------

SoftPolicyState SoftPolicyState::initial(int num_states, int num_actions, int horizon,
                                         double eta) {
  require(eta >= 0.0, "learning rate must be nonnegative");
  SoftPolicyState st;
  st.logit_sum.assign(horizon, StageTable(num_states, num_actions));
  st.eta = eta;
  return st;
}

StageTable softmax_rows(const StageTable& logits, double eta) {
  StageTable out(logits.num_states, logits.num_actions);
  std::vector<double> z(logits.num_actions);
  for (int s = 0; s < logits.num_states; ++s) {
    double m = -kInf;
    for (int a = 0; a < logits.num_actions; ++a) {
      z[a] = eta * logits(s, a);
      m = std::max(m, z[a]);
    }
    double total = 0.0;
    for (int a = 0; a < logits.num_actions; ++a) {
      z[a] = std::exp(z[a] - m);
      total += z[a];
    }
    for (int a = 0; a < logits.num_actions; ++a) out(s, a) = z[a] / total;
  }
  return out;
}

Policy SoftPolicyState::policy() const {
  StageSequence tables;
  for (const auto& l : logit_sum) tables.push_back(softmax_rows(l, eta));
  return Policy(std::move(tables));
}

SoftPolicyState softmax_update(const SoftPolicyState& state, const StageSequence& critic_q) {
  require(critic_q.size() == state.logit_sum.size(), "critic output has wrong number of stages");
  SoftPolicyState next = state;
  for (std::size_t h = 0; h < critic_q.size(); ++h)
    next.logit_sum[h] = next.logit_sum[h] + critic_q[h];
  next.member_counts.clear();
  ++next.t;
  return next;
}

SoftPolicyState softmax_update(const SoftPolicyState& state, const FunctionClass& cls,
                               const std::vector<int>& chain) {
  require(state.member_counts.empty() ? state.t == 0 : true,
          "membership counts were dropped by an earlier raw update");
  SoftPolicyState next = softmax_update(state, cls.render(chain));
  next.member_counts = state.member_counts;
  if (next.member_counts.empty())
    for (int h = 0; h < cls.horizon(); ++h) next.member_counts.emplace_back(cls.size(h), 0);
  for (int h = 0; h < cls.horizon(); ++h) ++next.member_counts[h][chain[h]];
  return next;
}

EtaChoice default_eta(double b, int T, int num_actions) {
  require(b > 0.0 && T >= 1 && num_actions >= 1, "default_eta: invalid arguments");
  const double log_vol = std::log(static_cast<double>(num_actions));
  const double e_minus_2 = std::numbers::e - 2.0;
  EtaChoice out;
  out.eta = std::sqrt(log_vol / (4.0 * e_minus_2 * b * b * T));
  out.meets_horizon_requirement = T >= log_vol / e_minus_2;
  return out;
}

// ---- projections ------------------------------------------------------------

Support full_support(int horizon, int num_states, int num_actions) {
  return Support(horizon, std::vector<char>(static_cast<std::size_t>(num_states) * num_actions, 1));
}

Support support_of(const StageSequence& occupancy) {
  Support out;
  for (const auto& d : occupancy) {
    std::vector<char> mask(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) mask[i] = d.values[i] > 0.0;
    out.push_back(std::move(mask));
  }
  return out;
}

Projection project_value(const FunctionClass& cls, const StageSequence& target,
                         const Support& support) {
  require(static_cast<int>(target.size()) == cls.horizon() &&
              static_cast<int>(support.size()) == cls.horizon(),
          "project_value: stage count mismatch");
  Projection out;
  for (int h = 0; h < cls.horizon(); ++h) {
    require(std::any_of(support[h].begin(), support[h].end(), [](char c) { return c != 0; }),
            "project_value: empty support at stage " + std::to_string(h));
    int best = 0;
    double best_err = kInf;
    for (int i = 0; i < cls.size(h); ++i) {
      const auto& f = cls.candidate(h, i);
      require(f.same_shape(target[h]), "project_value: shape mismatch");
      double err = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c)
        if (support[h][c]) err = std::max(err, std::abs(f.values[c] - target[h].values[c]));
      if (err < best_err) {
        best_err = err;
        best = i;
      }
    }
    out.index.push_back(best);
    out.error.push_back(best_err);
  }
  return out;
}

BellmanProjection project_bellman(const FunctionClass& cls, const EpisodicMdp& mdp,
                                  const Policy& pi, int next_index, int h) {
  require(h >= 0 && h < cls.horizon(), "project_bellman: step out of range");
  const bool last = h == cls.horizon() - 1;
  require(last || (next_index >= 0 && next_index < cls.size(h + 1)),
          "project_bellman: candidate index out of range");
  const StageTable image =
      bellman_apply(mdp, pi, last ? mdp.zero_table() : cls.candidate(h + 1, next_index), h);
  BellmanProjection out{0, kInf};
  for (int i = 0; i < cls.size(h); ++i) {
    const double err = (cls.candidate(h, i) - image).max_abs();
    if (err < out.error) out = {i, err};
  }
  return out;
}

Policy sample_soft_policy(const FunctionClass& cls, int max_terms, CounterRng& rng) {
  require(max_terms >= 1, "max_terms must be at least 1");
  const double eta = rng.uniform();
  StageSequence tables;
  for (int h = 0; h < cls.horizon(); ++h) {
    const int t = 1 + rng.uniform_int(max_terms);
    StageTable sum = cls.candidate(h, 0);
    std::fill(sum.values.begin(), sum.values.end(), 0.0);
    for (int i = 0; i < t; ++i) sum = sum + cls.candidate(h, rng.uniform_int(cls.size(h)));
    tables.push_back(softmax_rows(sum, eta));
  }
  return Policy(std::move(tables));
}

MisspecReport estimate_misspecification(const FunctionClass& cls, const EpisodicMdp& mdp,
                                        int probe_count, int max_terms, std::uint64_t seed,
                                        const std::optional<Support>& support) {
  require(probe_count >= 1, "probe_count must be at least 1");
  require(cls.horizon() == mdp.horizon(), "class horizon != MDP horizon");
  const Support sup =
      support ? *support : full_support(mdp.horizon(), mdp.num_states(), mdp.num_actions());
  MisspecReport rep;
  rep.xi.assign(cls.horizon(), 0.0);
  rep.nu.assign(cls.horizon(), 0.0);
  rep.num_probe_policies = probe_count;
  for (int p = 0; p < probe_count; ++p) {
    CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(p)));
    const Policy probe = sample_soft_policy(cls, max_terms, rng);
    const auto proj = project_value(cls, evaluate_policy(mdp, probe).q, sup);
    for (int h = 0; h < cls.horizon(); ++h) {
      rep.xi[h] = std::max(rep.xi[h], proj.error[h]);
      const int next_count = h + 1 < cls.horizon() ? cls.size(h + 1) : 1;
      for (int j = 0; j < next_count; ++j)
        rep.nu[h] = std::max(rep.nu[h], project_bellman(cls, mdp, probe, j, h).error);
    }
  }
  return rep;
}

CoveringReport covering_dims(const FunctionClass& cls, double epsilon, int T) {
  require(epsilon > 0.0, "covering_dims: epsilon must be positive");
  require(T >= 1, "covering_dims: T must be at least 1");
  CoveringReport rep;
  rep.epsilon = epsilon;
  rep.T = T;
  for (int h = 0; h < cls.horizon(); ++h) rep.d0_bound += std::log(static_cast<double>(cls.size(h)));
  if (const auto& net = cls.linear()) {
    const double d = net->dim();
    rep.d_F = d * std::log(1.0 + 2.0 / epsilon);
    rep.d_Pi = d * std::log(1.0 + 16.0 * cls.bound() * T / epsilon);
    return rep;
  }
  for (int h = 0; h < cls.horizon(); ++h) {
    const double n = cls.size(h);
    rep.d_F = std::max(rep.d_F, std::log(n));
    // Policies reachable with t <= T summed members: sum_t C(n+t-1, t) = C(n+T, T) - 1.
    const double log_binom = std::lgamma(n + T + 1.0) - std::lgamma(n + 1.0) - std::lgamma(T + 1.0);
    const double log_count = log_binom + std::log1p(-std::exp(-log_binom));
    rep.d_Pi = std::max(rep.d_Pi, std::max(0.0, log_count));
  }
  return rep;
}

}  // namespace gopolab
