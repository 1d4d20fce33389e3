#include "gopolab/offline_data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace gopolab {

BehaviorSchedule BehaviorSchedule::fixed(Policy pi) {
  BehaviorSchedule s;
  s.kind = Kind::kFixed;
  s.policies.push_back(std::move(pi));
  return s;
}

BehaviorSchedule BehaviorSchedule::round_robin(std::vector<Policy> cycle) {
  require(!cycle.empty(), "round-robin schedule needs at least one policy");
  BehaviorSchedule s;
  s.kind = Kind::kRoundRobin;
  s.policies = std::move(cycle);
  return s;
}

BehaviorSchedule BehaviorSchedule::greedy_so_far(double epsilon) {
  require(epsilon >= 0.0 && epsilon <= 1.0, "greedy-so-far epsilon must lie in [0, 1]");
  BehaviorSchedule s;
  s.kind = Kind::kGreedySoFar;
  s.epsilon = epsilon;
  return s;
}

nlohmann::json to_json(const BehaviorSchedule& schedule) {
  nlohmann::json j;
  switch (schedule.kind) {
    case BehaviorSchedule::Kind::kFixed: j["kind"] = "fixed"; break;
    case BehaviorSchedule::Kind::kRoundRobin: j["kind"] = "round-robin"; break;
    case BehaviorSchedule::Kind::kGreedySoFar: j["kind"] = "greedy-so-far"; break;
  }
  if (schedule.kind == BehaviorSchedule::Kind::kGreedySoFar) {
    j["epsilon"] = schedule.epsilon;
  } else {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : schedule.policies) ps.push_back(to_json(p));
    j["policies"] = std::move(ps);
  }
  return j;
}

BehaviorSchedule schedule_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "greedy-so-far") return BehaviorSchedule::greedy_so_far(j.value("epsilon", 0.3));
  std::vector<Policy> ps;
  for (const auto& p : j.at("policies")) ps.push_back(policy_from_json(p));
  if (kind == "fixed") {
    require(ps.size() == 1, "fixed schedule needs exactly one policy");
    return BehaviorSchedule::fixed(std::move(ps[0]));
  }
  if (kind == "round-robin") return BehaviorSchedule::round_robin(std::move(ps));
  throw ContractViolation("unknown schedule kind '" + kind + "'");
}

namespace {

// Tabular model fit on a prefix of episodes; its epsilon-greedy policy is the
// next behavior policy of the greedy-so-far rule.
class GreedyFitter {
 public:
  GreedyFitter(int S, int A, int H, double epsilon)
      : S_(S), A_(A), H_(H), epsilon_(epsilon),
        count_(static_cast<std::size_t>(H) * S * A, 0.0),
        reward_sum_(count_.size(), 0.0),
        next_count_(count_.size() * S, 0.0) {}

  void add(const std::vector<Transition>& episode) {
    for (int h = 0; h < H_; ++h) {
      const auto& z = episode[h];
      const std::size_t c = idx(h, z.s, z.a);
      count_[c] += 1.0;
      reward_sum_[c] += z.r;
      next_count_[c * S_ + z.s_next] += 1.0;
    }
  }

  Policy policy() const {
    StageSequence tables(H_, StageTable(S_, A_));
    std::vector<double> v_next(S_, 0.0), v(S_);
    for (int h = H_ - 1; h >= 0; --h) {
      for (int s = 0; s < S_; ++s) {
        int best = 0;
        double best_q = -kInf;
        for (int a = 0; a < A_; ++a) {
          const std::size_t c = idx(h, s, a);
          double q = 0.0;
          if (count_[c] > 0.0) {
            q = reward_sum_[c] / count_[c];
            for (int sn = 0; sn < S_; ++sn) q += next_count_[c * S_ + sn] / count_[c] * v_next[sn];
          }
          if (q > best_q) {
            best_q = q;
            best = a;
          }
        }
        v[s] = best_q;
        for (int a = 0; a < A_; ++a)
          tables[h](s, a) = epsilon_ / A_ + (a == best ? 1.0 - epsilon_ : 0.0);
      }
      v_next = v;
    }
    return Policy(std::move(tables));
  }

 private:
  std::size_t idx(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * S_ + s) * A_ + a;
  }
  int S_, A_, H_;
  double epsilon_;
  std::vector<double> count_, reward_sum_, next_count_;
};

// Yields mu^1, mu^2, ... as episodes are appended.
class ScheduleCursor {
 public:
  ScheduleCursor(const BehaviorSchedule& schedule, int S, int A, int H)
      : schedule_(schedule), fitter_(S, A, H, schedule.epsilon) {}

  Policy current(int k) const {
    switch (schedule_.kind) {
      case BehaviorSchedule::Kind::kFixed: return schedule_.policies.front();
      case BehaviorSchedule::Kind::kRoundRobin:
        return schedule_.policies[static_cast<std::size_t>(k) % schedule_.policies.size()];
      case BehaviorSchedule::Kind::kGreedySoFar: return fitter_.policy();
    }
    return schedule_.policies.front();
  }
  void observe(const std::vector<Transition>& episode) {
    if (schedule_.kind == BehaviorSchedule::Kind::kGreedySoFar) fitter_.add(episode);
  }

 private:
  const BehaviorSchedule& schedule_;
  GreedyFitter fitter_;
};

void check_schedule(const BehaviorSchedule& schedule, int S, int A, int H) {
  if (schedule.kind == BehaviorSchedule::Kind::kGreedySoFar) return;
  require(!schedule.policies.empty(), "schedule has no policies");
  for (const auto& p : schedule.policies)
    require(p.horizon() == H && p.num_states() == S && p.num_actions() == A,
            "schedule policy shape does not match the MDP");
}

}  // namespace

OfflineDataset collect(const EpisodicMdp& mdp, const BehaviorSchedule& schedule, int K,
                       std::uint64_t seed) {
  require(K >= 0, "K must be nonnegative");
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  check_schedule(schedule, S, A, H);
  OfflineDataset data;
  data.num_states = S;
  data.num_actions = A;
  data.horizon = H;
  data.initial_state = mdp.initial_state();
  data.schedule = schedule;
  data.seed = seed;
  data.mdp_fingerprint = fingerprint(mdp);
  data.episodes.reserve(K);

  ScheduleCursor cursor(schedule, S, A, H);
  const double w = mdp.noise().max_magnitude();
  for (int k = 0; k < K; ++k) {
    const Policy mu = cursor.current(k);
    std::vector<Transition> episode(H);
    int s = mdp.initial_state();
    for (int h = 0; h < H; ++h) {
      CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(h)));
      const int a = rng.categorical(&mu.stage(h).values[static_cast<std::size_t>(s) * A], A);
      auto p = mdp.next_state_distribution(h, s, a);
      const int s_next = rng.categorical(p.data(), S);
      const double noise = rng.uniform(-w, w);
      episode[h] = {s, a, mdp.reward(h)(s, a) + (w > 0.0 ? noise : 0.0), s_next};
      s = s_next;
    }
    cursor.observe(episode);
    data.episodes.push_back(std::move(episode));
  }
  return data;
}

std::vector<Policy> realized_behavior(const OfflineDataset& data) {
  check_schedule(data.schedule, data.num_states, data.num_actions, data.horizon);
  ScheduleCursor cursor(data.schedule, data.num_states, data.num_actions, data.horizon);
  std::vector<Policy> out;
  out.reserve(data.episodes.size());
  for (int k = 0; k < data.num_episodes(); ++k) {
    out.push_back(cursor.current(k));
    cursor.observe(data.episodes[k]);
  }
  return out;
}

StageSequence behavior_occupancy(const EpisodicMdp& mdp, const OfflineDataset& data) {
  require(data.num_episodes() > 0, "behavior occupancy needs at least one episode");
  StageSequence total(mdp.horizon(), mdp.zero_table());
  const double K = data.num_episodes();
  auto accumulate = [&](const Policy& mu, double weight) {
    const auto occ = evaluate_policy(mdp, mu).occupancy;
    for (int h = 0; h < mdp.horizon(); ++h)
      for (std::size_t i = 0; i < occ[h].size(); ++i) total[h].values[i] += weight * occ[h].values[i];
  };
  if (data.schedule.kind == BehaviorSchedule::Kind::kFixed) {
    accumulate(data.schedule.policies.front(), 1.0);
    return total;
  }
  for (const auto& mu : realized_behavior(data)) accumulate(mu, 1.0 / K);
  return total;
}

StageSequence empirical_occupancy(const OfflineDataset& data) {
  StageSequence occ(data.horizon, StageTable(data.num_states, data.num_actions));
  if (data.episodes.empty()) return occ;
  const double inv = 1.0 / data.num_episodes();
  for (const auto& ep : data.episodes)
    for (int h = 0; h < data.horizon; ++h) occ[h](ep[h].s, ep[h].a) += inv;
  return occ;
}

double td_loss(const StageTable& f_h, const StageTable& f_next, const Policy& pi, int h,
               const Transition& z) {
  const double next = h + 1 < pi.horizon() ? pi.average(h + 1, f_next, z.s_next) : 0.0;
  const double resid = f_h(z.s, z.a) - z.r - next;
  return resid * resid;
}

TransitionStats summarize(const OfflineDataset& data) {
  TransitionStats stats;
  stats.horizon = data.horizon;
  stats.num_episodes = data.num_episodes();
  stats.groups.resize(data.horizon);
  const int S = data.num_states, A = data.num_actions;
  for (int h = 0; h < data.horizon; ++h) {
    std::vector<std::vector<double>> rewards(static_cast<std::size_t>(S) * A * S);
    for (const auto& ep : data.episodes) {
      const auto& z = ep[h];
      rewards[(static_cast<std::size_t>(z.s) * A + z.a) * S + z.s_next].push_back(z.r);
    }
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int sn = 0; sn < S; ++sn) {
          auto& rs = rewards[(static_cast<std::size_t>(s) * A + a) * S + sn];
          if (rs.empty()) continue;
          std::sort(rs.begin(), rs.end());
          double sum = 0.0;
          for (double r : rs) sum += r;
          const double mean = sum / static_cast<double>(rs.size());
          double sq = 0.0;
          for (double r : rs) sq += (r - mean) * (r - mean);
          stats.groups[h].push_back({s, a, sn, static_cast<double>(rs.size()), mean, sq});
        }
  }
  return stats;
}

TdLossMatrix build_td_matrix(const TransitionStats& stats, const FunctionClass& cls,
                             const Policy& pi) {
  require(cls.horizon() == stats.horizon && pi.horizon() == stats.horizon,
          "build_td_matrix: horizon mismatch");
  TdLossMatrix out;
  const int H = stats.horizon;
  for (int h = 0; h < H; ++h) {
    const bool last = h == H - 1;
    const int rows = cls.size(h);
    const int cols = last ? 1 : cls.size(h + 1);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(rows, cols);
    const auto& groups = stats.groups[h];
    // next-stage values f_j(s', pi_{h+1}) per group
    Eigen::MatrixXd next_val = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups.size()), cols);
    if (!last)
      for (int j = 0; j < cols; ++j)
        for (std::size_t g = 0; g < groups.size(); ++g)
          next_val(static_cast<Eigen::Index>(g), j) =
              pi.average(h + 1, cls.candidate(h + 1, j), groups[g].s_next);
    for (int i = 0; i < rows; ++i) {
      const auto& f = cls.candidate(h, i);
      for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
          const auto& gr = groups[g];
          const double c = f(gr.s, gr.a) - gr.mean_reward - next_val(static_cast<Eigen::Index>(g), j);
          acc += gr.count * c * c + gr.centered_sq;
        }
        L(i, j) = acc;
      }
    }
    out.loss.push_back(std::move(L));
  }
  return out;
}

TdLossMatrix build_td_matrix(const OfflineDataset& data, const FunctionClass& cls,
                             const Policy& pi) {
  return build_td_matrix(summarize(data), cls, pi);
}

// ---- persistence -------------------------------------------------------------

void save_dataset(const OfflineDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json header;
  header["K"] = data.num_episodes();
  header["H"] = data.horizon;
  header["S"] = data.num_states;
  header["A"] = data.num_actions;
  header["s1"] = data.initial_state;
  header["seed"] = data.seed;
  header["fingerprint"] = data.mdp_fingerprint;
  header["schedule"] = to_json(data.schedule);
  out << "gopolab-dataset v" << kDatasetFormatVersion << ' ' << header.dump() << '\n';
  for (int k = 0; k < data.num_episodes(); ++k)
    for (int h = 0; h < data.horizon; ++h) {
      const auto& z = data.episodes[k][h];
      out << k << ' ' << h << ' ' << z.s << ' ' << z.a << ' ' << format_double(z.r) << ' '
          << z.s_next << '\n';
    }
  if (!out) throw std::runtime_error("write failed for " + path);
}

OfflineDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const std::string magic = "gopolab-dataset v";
  if (line.rfind(magic, 0) != 0) throw ParseError(1, "not a dataset file");
  OfflineDataset data;
  int K = 0;
  try {
    std::size_t pos = magic.size();
    const int version = std::stoi(line.substr(pos));
    if (version != kDatasetFormatVersion)
      throw ParseError(1, "unsupported dataset version " + std::to_string(version));
    const auto header = nlohmann::json::parse(line.substr(line.find(' ', pos) + 1));
    K = header.at("K").get<int>();
    data.horizon = header.at("H").get<int>();
    data.num_states = header.at("S").get<int>();
    data.num_actions = header.at("A").get<int>();
    data.initial_state = header.at("s1").get<int>();
    data.seed = header.at("seed").get<std::uint64_t>();
    data.mdp_fingerprint = header.at("fingerprint").get<std::string>();
    data.schedule = schedule_from_json(header.at("schedule"));
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(1, std::string("bad header: ") + e.what());
  }
  if (K < 0 || data.horizon <= 0 || data.num_states <= 0 || data.num_actions <= 0)
    throw ParseError(1, "bad header sizes");

  data.episodes.assign(K, std::vector<Transition>(data.horizon));
  std::size_t line_no = 1;
  for (int k = 0; k < K; ++k)
    for (int h = 0; h < data.horizon; ++h) {
      ++line_no;
      if (!std::getline(in, line))
        throw ParseError(line_no, "missing transition k=" + std::to_string(k) +
                                      " h=" + std::to_string(h) + " (file truncated)");
      std::istringstream fields(line);
      int kk = -1, hh = -1;
      std::string r_text;
      Transition z;
      if (!(fields >> kk >> hh >> z.s >> z.a >> r_text >> z.s_next))
        throw ParseError(line_no, "expected 'k h s a r s_next'");
      std::string extra;
      if (fields >> extra) throw ParseError(line_no, "trailing fields");
      if (kk != k || hh != h)
        throw ParseError(line_no, "expected transition k=" + std::to_string(k) +
                                      " h=" + std::to_string(h));
      try {
        std::size_t used = 0;
        z.r = std::stod(r_text, &used);
        if (used != r_text.size()) throw std::invalid_argument("reward");
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad reward '" + r_text + "'");
      }
      if (z.s < 0 || z.s >= data.num_states || z.s_next < 0 || z.s_next >= data.num_states ||
          z.a < 0 || z.a >= data.num_actions)
        throw ParseError(line_no, "index out of range");
      if ((h == 0 && z.s != data.initial_state) ||
          (h > 0 && z.s != data.episodes[k][h - 1].s_next))
        throw ParseError(line_no, "state does not continue the episode");
      data.episodes[k][h] = z;
    }
  if (std::getline(in, line) && !line.empty())
    throw ParseError(line_no + 1, "unexpected content after the last transition");
  return data;
}

bool check_fingerprint(const OfflineDataset& data, const EpisodicMdp& mdp) {
  const std::string fp = fingerprint(mdp);
  if (fp == data.mdp_fingerprint) return true;
  std::cerr << "warning: dataset fingerprint " << data.mdp_fingerprint
            << " does not match MDP fingerprint " << fp << '\n';
  return false;
}

}  // namespace gopolab
