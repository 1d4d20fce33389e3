#include "gopolab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "gopolab/critics.hpp"
#include "gopolab/diversity.hpp"
#include "gopolab/instances.hpp"

namespace gopolab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

template <class T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path, "has the wrong type");
  }
}

template <class T>
T value_or(const json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  return get_as<T>(*it, path.empty() ? key : path + "." + key);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

AlgorithmSpec parse_algorithm(const json& j, const std::string& path) {
  AlgorithmSpec spec;
  const std::string critic = get_as<std::string>(field(j, "critic", path), join(path, "critic"));
  try {
    spec.critic = critic_from_string(critic);
  } catch (const ContractViolation&) {
    throw ConfigError(join(path, "critic"), "unknown critic '" + critic + "'");
  }
  spec.label = value_or<std::string>(j, "label", critic, path);
  const std::string mode = value_or<std::string>(j, "params", "theorem-default", path);
  if (mode == "theorem-default") spec.mode = ParamMode::kTheoremDefault;
  else if (mode == "explicit") spec.mode = ParamMode::kExplicit;
  else if (mode == "tuned") spec.mode = ParamMode::kTuned;
  else throw ConfigError(join(path, "params"), "expected theorem-default, explicit or tuned");
  spec.multiplier = value_or<double>(j, "multiplier", 1.0, path);
  if (!(spec.multiplier > 0.0)) throw ConfigError(join(path, "multiplier"), "must be positive");
  auto opt = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key)) out = get_as<double>(j.at(key), join(path, key));
  };
  opt("beta", spec.beta);
  opt("lambda", spec.lambda);
  opt("gamma", spec.gamma);
  opt("eta", spec.eta);
  if (j.contains("T")) {
    spec.T = get_as<int>(j.at("T"), join(path, "T"));
    if (*spec.T < 1) throw ConfigError(join(path, "T"), "must be at least 1");
  }
  if (spec.mode == ParamMode::kExplicit) {
    const char* needed = spec.critic == CriticKind::kVsc ? "beta" : "lambda";
    if (!j.contains(needed)) throw ConfigError(join(path, needed), "missing (explicit mode)");
    if (spec.critic == CriticKind::kPsc && !j.contains("gamma"))
      throw ConfigError(join(path, "gamma"), "missing (explicit mode)");
    if (!spec.T) throw ConfigError(join(path, "T"), "missing (explicit mode)");
  }
  return spec;
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string dataset_path(const std::string& dir, int K, std::uint64_t seed) {
  return (fs::path(dir) / "data" / ("K" + std::to_string(K) + "_s" + std::to_string(seed) + ".txt"))
      .string();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// All deterministic policies when there are at most `limit`, otherwise `limit` random ones.
std::vector<Policy> deterministic_menu(const EpisodicMdp& mdp, int limit, std::uint64_t seed) {
  const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
  const double log_count = S * H * std::log(static_cast<double>(A));
  std::vector<Policy> menu;
  std::vector<std::vector<int>> acts(H, std::vector<int>(S, 0));
  if (log_count <= std::log(static_cast<double>(limit)) + 1e-9) {
    for (;;) {
      menu.push_back(Policy::deterministic(acts, A));
      int h = H - 1, s = S - 1;
      for (;;) {
        if (++acts[h][s] < A) break;
        acts[h][s] = 0;
        if (--s < 0) {
          s = S - 1;
          if (--h < 0) return menu;
        }
      }
    }
  }
  CounterRng rng(seed);
  for (int i = 0; i < limit; ++i) {
    for (auto& row : acts)
      for (auto& a : row) a = rng.uniform_int(A);
    menu.push_back(Policy::deterministic(acts, A));
  }
  return menu;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  const int schema = value_or<int>(j, "schema", kConfigSchemaVersion, "");
  if (schema != kConfigSchemaVersion)
    throw ConfigError("schema", "unsupported version " + std::to_string(schema));
  ExperimentConfig cfg;
  cfg.mdp = field(j, "mdp", "");
  cfg.function_class = field(j, "class", "");
  cfg.behavior = j.value("behavior", json{{"kind", "uniform"}});
  cfg.comparator = j.value("comparator", json{{"kind", "optimal"}});

  const json& ks = field(j, "K", "");
  if (!ks.is_array() || ks.empty()) throw ConfigError("K", "expected a nonempty array");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int k = get_as<int>(ks[i], "K[" + std::to_string(i) + "]");
    if (k < 1) throw ConfigError("K[" + std::to_string(i) + "]", "must be positive");
    if (!cfg.K.empty() && k <= cfg.K.back()) throw ConfigError("K", "must be strictly increasing");
    cfg.K.push_back(k);
  }
  const json& seeds = field(j, "seeds", "");
  if (seeds.is_object()) {
    const int count = get_as<int>(field(seeds, "count", "seeds"), "seeds.count");
    const auto start = value_or<std::uint64_t>(seeds, "start", 1, "seeds");
    for (int i = 0; i < count; ++i) cfg.seeds.push_back(start + i);
  } else if (seeds.is_array()) {
    for (std::size_t i = 0; i < seeds.size(); ++i)
      cfg.seeds.push_back(get_as<std::uint64_t>(seeds[i], "seeds[" + std::to_string(i) + "]"));
  } else {
    throw ConfigError("seeds", "expected an array or {count, start}");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds", "must be nonempty");

  const json& algs = field(j, "algorithms", "");
  if (!algs.is_array() || algs.empty()) throw ConfigError("algorithms", "expected a nonempty array");
  for (std::size_t i = 0; i < algs.size(); ++i)
    cfg.algorithms.push_back(parse_algorithm(algs[i], "algorithms[" + std::to_string(i) + "]"));

  cfg.assumed_diversity = value_or<double>(j, "assumed_diversity", 1.0, "");
  if (!(cfg.assumed_diversity > 0.0)) throw ConfigError("assumed_diversity", "must be positive");
  cfg.xi_probes = value_or<int>(j, "xi_probes", 16, "");
  if (cfg.xi_probes < 0) throw ConfigError("xi_probes", "must be nonnegative");
  cfg.tuning_seed = value_or<std::uint64_t>(j, "tuning_seed", 1000003, "");
  cfg.workers = value_or<int>(j, "workers", 1, "");
  if (cfg.workers < 1) throw ConfigError("workers", "must be at least 1");
  cfg.output = value_or<std::string>(j, "output", "out", "");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

std::string output_dir(const ExperimentConfig& cfg) {
  const fs::path p(cfg.output);
  if (p.is_relative())
    if (const char* root = std::getenv("GOPOLAB_OUTPUT_ROOT"); root && *root)
      return (fs::path(root) / p).string();
  return p.string();
}

Instance build_instance(const ExperimentConfig& cfg) {
  const json& m = cfg.mdp;
  std::optional<LinearInstance> lin;
  std::optional<EpisodicMdp> mdp;
  try {
    if (m.contains("file")) {
      mdp = load_mdp(get_as<std::string>(m.at("file"), "mdp.file"));
    } else {
      const std::string gen = get_as<std::string>(field(m, "generator", "mdp"), "mdp.generator");
      if (gen == "closed_tail") {
        mdp = closed_tail_mdp();
      } else if (gen == "random") {
        mdp = random_mdp(get_as<int>(field(m, "states", "mdp"), "mdp.states"),
                         get_as<int>(field(m, "actions", "mdp"), "mdp.actions"),
                         get_as<int>(field(m, "horizon", "mdp"), "mdp.horizon"),
                         value_or<double>(m, "b", 1.0, "mdp"),
                         value_or<std::uint64_t>(m, "seed", 0, "mdp"),
                         value_or<double>(m, "noise", 0.0, "mdp"));
      } else if (gen == "gridworld") {
        mdp = gridworld_chain(get_as<int>(field(m, "length", "mdp"), "mdp.length"),
                              get_as<int>(field(m, "horizon", "mdp"), "mdp.horizon"),
                              value_or<double>(m, "b", 1.0, "mdp"),
                              value_or<double>(m, "slip", 0.1, "mdp"));
      } else if (gen == "corridor") {
        mdp = corridor(get_as<int>(field(m, "horizon", "mdp"), "mdp.horizon"),
                       value_or<double>(m, "b", 1.0, "mdp"), value_or<int>(m, "actions", 2, "mdp"));
      } else if (gen == "linear") {
        lin = linear_mdp(get_as<int>(field(m, "states", "mdp"), "mdp.states"),
                         get_as<int>(field(m, "actions", "mdp"), "mdp.actions"),
                         get_as<int>(field(m, "horizon", "mdp"), "mdp.horizon"),
                         get_as<int>(field(m, "dim", "mdp"), "mdp.dim"),
                         value_or<double>(m, "b", 1.0, "mdp"),
                         value_or<std::uint64_t>(m, "seed", 0, "mdp"),
                         value_or<double>(m, "theta_max", 0.05, "mdp"),
                         value_or<double>(m, "margin", 0.1, "mdp"));
        mdp = lin->mdp;
      } else {
        throw ConfigError("mdp.generator", "unknown generator '" + gen + "'");
      }
    }
  } catch (const ContractViolation& e) {
    throw ConfigError("mdp", e.what());
  }

  const json& c = cfg.function_class;
  std::optional<FunctionClass> cls;
  const std::string kind = get_as<std::string>(field(c, "kind", "class"), "class.kind");
  try {
    if (kind == "closed_tail") {
      cls = closed_tail_class(*mdp);
    } else if (kind == "file") {
      cls = load_class(get_as<std::string>(field(c, "path", "class"), "class.path"));
    } else if (kind == "linear_net") {
      if (!lin) throw ConfigError("class.kind", "linear_net needs the linear MDP generator");
      cls = FunctionClass::linear_net(mdp->bound(), lin->phi, lin->radius,
                                      get_as<double>(field(c, "resolution", "class"), "class.resolution"),
                                      mdp->num_actions());
    } else if (kind == "policy_values") {
      // Q^pi of random policies plus the optimal policy, one candidate per policy.
      const int probes = value_or<int>(c, "probes", 8, "class");
      CounterRng rng(value_or<std::uint64_t>(c, "seed", 0, "class"));
      std::vector<std::vector<StageTable>> cands(mdp->horizon());
      auto add = [&](const Policy& pi) {
        const auto q = evaluate_policy(*mdp, pi).q;
        for (int h = 0; h < mdp->horizon(); ++h) cands[h].push_back(q[h]);
      };
      add(optimal_policy(*mdp));
      for (int i = 0; i < probes; ++i)
        add(random_policy(mdp->num_states(), mdp->num_actions(), mdp->horizon(), rng));
      cls = FunctionClass(mdp->bound(), std::move(cands));
    } else {
      throw ConfigError("class.kind", "unknown class kind '" + kind + "'");
    }
  } catch (const ContractViolation& e) {
    throw ConfigError("class", e.what());
  }
  if (cls->horizon() != mdp->horizon()) throw ConfigError("class", "horizon differs from the MDP");

  const json& b = cfg.behavior;
  const std::string bkind = get_as<std::string>(field(b, "kind", "behavior"), "behavior.kind");
  BehaviorSchedule schedule;
  const int S = mdp->num_states(), A = mdp->num_actions(), H = mdp->horizon();
  if (bkind == "uniform") {
    schedule = BehaviorSchedule::fixed(Policy::uniform(S, A, H));
  } else if (bkind == "corridor") {
    schedule = BehaviorSchedule::fixed(
        corridor_behavior(H, value_or<double>(b, "coverage", 0.05, "behavior"), A));
  } else if (bkind == "greedy_so_far") {
    schedule = BehaviorSchedule::greedy_so_far(value_or<double>(b, "epsilon", 0.3, "behavior"));
  } else if (bkind == "round_robin_random") {
    CounterRng rng(value_or<std::uint64_t>(b, "seed", 0, "behavior"));
    std::vector<Policy> cycle;
    for (int i = 0; i < value_or<int>(b, "count", 3, "behavior"); ++i)
      cycle.push_back(random_policy(S, A, H, rng));
    if (cycle.empty()) throw ConfigError("behavior.count", "must be positive");
    schedule = BehaviorSchedule::round_robin(std::move(cycle));
  } else if (bkind == "file") {
    std::ifstream is(get_as<std::string>(field(b, "path", "behavior"), "behavior.path"));
    if (!is) throw ConfigError("behavior.path", "cannot open");
    json pj;
    is >> pj;
    schedule = BehaviorSchedule::fixed(policy_from_json(pj));
  } else {
    throw ConfigError("behavior.kind", "unknown behavior '" + bkind + "'");
  }
  return {*mdp, *cls, schedule};
}

std::uint64_t dataset_seed(std::uint64_t seed, int K) {
  return derive_seed(seed, static_cast<std::uint64_t>(K), 0x64617461);
}

ResolvedParams resolve_parameters(const AlgorithmSpec& spec, const Instance& inst, int K,
                                  double xi_max, double assumed_diversity,
                                  std::optional<double> multiplier) {
  ResolvedParams p;
  const double b = inst.mdp.bound();
  const int H = inst.mdp.horizon();
  const int A = inst.mdp.num_actions();
  const double mult = multiplier.value_or(spec.multiplier);
  p.epsilon = 1.0 / K;
  p.delta = 1.0 / K;
  p.xi_max = xi_max;
  p.T = spec.T.value_or(std::max(1, static_cast<int>(std::ceil(K * std::log(static_cast<double>(A))))));
  p.eta = spec.eta.value_or(default_eta(b, p.T, A).eta);
  if (spec.mode == ParamMode::kExplicit) {
    p.mode = "explicit";
    p.beta = spec.beta.value_or(0.0);
    p.lambda = spec.lambda.value_or(0.0);
    p.gamma = spec.gamma.value_or(0.0);
    return p;
  }
  std::ostringstream mode;
  if (spec.mode == ParamMode::kTuned) mode << "tuned(multiplier=" << format_double(mult) << ")";
  else mode << "theorem-default(multiplier=" << format_double(mult) << ")";
  p.mode = mode.str();
  const CoveringReport cov = covering_dims(inst.cls, p.epsilon, p.T);
  const double d_opt = std::max(cov.d_F, cov.d_Pi);
  p.gamma = spec.gamma.value_or(theorem_gamma_psc(b));
  switch (spec.critic) {
    case CriticKind::kVsc:
      p.d_tilde = d_opt;
      p.beta = spec.beta.value_or(theorem_beta(b, K, p.epsilon, xi_max, H, d_opt, p.delta, mult));
      break;
    case CriticKind::kRoc:
      p.d_tilde = d_opt;
      p.lambda = spec.lambda.value_or(
          theorem_lambda_roc(b, K, p.epsilon, H, d_opt, p.delta, assumed_diversity, mult));
      break;
    case CriticKind::kPsc:
      // Uniform prior on a finite class: d_0 and d'_0 are both at most ln|F|.
      p.d_tilde = std::max(d_opt, cov.d0_bound / (p.gamma * H * b * b));
      p.lambda = spec.lambda.value_or(theorem_lambda_psc(b, K, p.epsilon, H, p.d_tilde, p.delta,
                                                         p.gamma, assumed_diversity, mult));
      break;
  }
  return p;
}

Comparator resolve_comparator(const ExperimentConfig& cfg, const Instance& inst,
                              const StageSequence& d_mu, int K) {
  const json& c = cfg.comparator;
  const std::string kind = get_as<std::string>(field(c, "kind", "comparator"), "comparator.kind");
  if (kind == "optimal") return {optimal_policy(inst.mdp), "optimal"};
  if (kind == "policy") {
    const std::string path = get_as<std::string>(field(c, "path", "comparator"), "comparator.path");
    std::ifstream is(path);
    if (!is) throw ConfigError("comparator.path", "cannot open " + path);
    json pj;
    is >> pj;
    return {policy_from_json(pj), "policy:" + path};
  }
  if (kind == "diversity_cap") {
    const double cap = get_as<double>(field(c, "cap", "comparator"), "comparator.cap");
    const double eps = value_or<double>(c, "epsilon", 1.0 / std::sqrt(static_cast<double>(K)), "comparator");
    const int limit = value_or<int>(c, "menu_size", 4096, "comparator");
    const auto menu = deterministic_menu(inst.mdp, limit, value_or<std::uint64_t>(c, "seed", 0, "comparator"));
    int best = -1;
    double best_value = -kInf;
    for (std::size_t i = 0; i < menu.size(); ++i) {
      const auto eval = evaluate_policy(inst.mdp, menu[i]);
      if (data_diversity(inst.cls, eval.occupancy, d_mu, eps).value > cap) continue;
      if (eval.initial_value() > best_value) {
        best_value = eval.initial_value();
        best = static_cast<int>(i);
      }
    }
    if (best < 0) throw ConfigError("comparator.cap", "no menu policy meets the diversity cap");
    return {menu[best], "menu-restricted-diversity-cap(" + format_double(cap) + ")"};
  }
  throw ConfigError("comparator.kind", "unknown comparator '" + kind + "'");
}

CellResult run_cell(const ExperimentConfig& cfg, const Instance& inst, const OfflineDataset& data,
                    const AlgorithmSpec& spec, const ResolvedParams& params, std::uint64_t seed) {
  CellResult r;
  r.algorithm = spec.label;
  r.K = data.num_episodes();
  r.seed = seed;
  r.params = params;
  const auto start = std::chrono::steady_clock::now();
  const StageSequence d_mu = behavior_occupancy(inst.mdp, data);
  const Comparator comp = resolve_comparator(cfg, inst, d_mu, r.K);
  r.comparator = csv_safe(comp.label);
  const auto comp_eval = evaluate_policy(inst.mdp, comp.policy);
  r.comparator_value = comp_eval.initial_value();
  r.diversity =
      data_diversity(inst.cls, comp_eval.occupancy, d_mu, 1.0 / std::sqrt(static_cast<double>(r.K))).value;

  GopoConfig gc;
  gc.critic = spec.critic;
  gc.beta = params.beta;
  gc.lambda = params.lambda;
  gc.gamma = params.gamma;
  gc.T = params.T;
  gc.eta = params.eta;
  gc.seed = derive_seed(seed, static_cast<std::uint64_t>(r.K), static_cast<std::uint64_t>(spec.critic));
  gc.record_trace = false;
  try {
    const GopoResult res = run(data, inst.cls, gc);
    r.suboptimality = evaluate_mixture(res.mixture, inst.mdp, comp.policy);
  } catch (const std::exception& e) {
    r.failure = csv_safe(e.what());
    r.suboptimality = std::nan("");
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string results_header() {
  return "schema,algorithm,K,seed,suboptimality,T,eta,beta,lambda,gamma,epsilon,delta,d_tilde,"
         "xi_max,param_mode,comparator,comparator_value,diversity,failures";
}

std::string results_row(const CellResult& r) {
  std::ostringstream os;
  const auto& p = r.params;
  os << kResultsSchemaVersion << ',' << r.algorithm << ',' << r.K << ',' << r.seed << ','
     << (r.failure.empty() ? format_double(r.suboptimality) : "") << ',' << p.T << ','
     << format_double(p.eta) << ',' << format_double(p.beta) << ',' << format_double(p.lambda)
     << ',' << format_double(p.gamma) << ',' << format_double(p.epsilon) << ','
     << format_double(p.delta) << ',' << format_double(p.d_tilde) << ','
     << format_double(p.xi_max) << ',' << p.mode << ',' << r.comparator << ','
     << format_double(r.comparator_value) << ',' << format_double(r.diversity) << ','
     << r.failure;
  return os.str();
}

std::vector<std::string> cmd_gen(const ExperimentConfig& cfg) {
  const Instance inst = build_instance(cfg);
  const std::string dir = output_dir(cfg);
  fs::create_directories(fs::path(dir) / "data");
  std::vector<std::string> written;
  const std::string mdp_path = (fs::path(dir) / "mdp.json").string();
  const std::string cls_path = (fs::path(dir) / "class.json").string();
  save_mdp(inst.mdp, mdp_path);
  save_class(inst.cls, cls_path);
  written.push_back(mdp_path);
  written.push_back(cls_path);
  for (int K : cfg.K)
    for (auto seed : cfg.seeds) {
      const std::string path = dataset_path(dir, K, seed);
      save_dataset(collect(inst.mdp, inst.schedule, K, dataset_seed(seed, K)), path);
      written.push_back(path);
    }
  return written;
}

std::vector<CellResult> cmd_run(const ExperimentConfig& cfg) {
  const std::string dir = output_dir(cfg);
  Instance inst = build_instance(cfg);
  // The generated files are authoritative; they must match the configured instance.
  const EpisodicMdp stored_mdp = load_mdp((fs::path(dir) / "mdp.json").string());
  const FunctionClass stored_cls = load_class((fs::path(dir) / "class.json").string());
  if (!(stored_mdp == inst.mdp) || !(stored_cls == inst.cls))
    throw ConfigError("output", "generated files in " + dir + " do not match the config; rerun gen");

  struct Cell {
    std::size_t alg;
    int K;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
    for (int K : cfg.K)
      for (auto seed : cfg.seeds) cells.push_back({a, K, seed});

  // Realizability estimate on the behavior support, shared by every cell.
  double xi_max = 0.0;
  if (cfg.xi_probes > 0) {
    const auto rep = estimate_misspecification(inst.cls, inst.mdp, cfg.xi_probes, 8, cfg.tuning_seed);
    xi_max = *std::max_element(rep.xi.begin(), rep.xi.end());
  }

  // Parameters per (algorithm, K); tuned mode searches multipliers on a held-out dataset.
  std::map<std::pair<std::size_t, int>, ResolvedParams> params;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
    for (int K : cfg.K) {
      const AlgorithmSpec& spec = cfg.algorithms[a];
      if (spec.mode != ParamMode::kTuned) {
        params[{a, K}] = resolve_parameters(spec, inst, K, xi_max, cfg.assumed_diversity);
        continue;
      }
      const OfflineDataset held_out = collect(inst.mdp, inst.schedule, K, dataset_seed(cfg.tuning_seed, K));
      double best = kInf;
      for (double m : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0}) {
        const auto p = resolve_parameters(spec, inst, K, xi_max, cfg.assumed_diversity, m);
        const CellResult r = run_cell(cfg, inst, held_out, spec, p, cfg.tuning_seed);
        if (r.failure.empty() && r.suboptimality < best) {
          best = r.suboptimality;
          params[{a, K}] = p;
        }
      }
      if (!params.count({a, K}))
        params[{a, K}] = resolve_parameters(spec, inst, K, xi_max, cfg.assumed_diversity);
    }

  fs::create_directories(fs::path(dir) / "cells");
  std::vector<CellResult> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      try {
        const OfflineDataset data = load_dataset(dataset_path(dir, c.K, c.seed));
        check_fingerprint(data, inst.mdp);
        results[i] = run_cell(cfg, inst, data, cfg.algorithms[c.alg], params.at({c.alg, c.K}), c.seed);
      } catch (const std::exception& e) {
        results[i].algorithm = cfg.algorithms[c.alg].label;
        results[i].K = c.K;
        results[i].seed = c.seed;
        results[i].params = params.at({c.alg, c.K});
        results[i].failure = csv_safe(e.what());
      }
      const auto& r = results[i];
      write_atomically(fs::path(dir) / "cells" /
                           (r.algorithm + "_K" + std::to_string(r.K) + "_s" + std::to_string(r.seed) + ".csv"),
                       results_row(r) + "\n");
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < cfg.workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream rows, timings;
  rows << results_header() << '\n';
  timings << "algorithm,K,seed,wall_ms\n";
  for (const auto& r : results) {
    rows << results_row(r) << '\n';
    timings << r.algorithm << ',' << r.K << ',' << r.seed << ',' << format_double(r.wall_ms) << '\n';
  }
  write_atomically(fs::path(dir) / "results.csv", rows.str());
  write_atomically(fs::path(dir) / "timings.csv", timings.str());
  return results;
}

std::pair<double, double> fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 3, "slope fit needs at least three points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "log-log fit needs positive values");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ly[i] - (my + slope * (lx[i] - mx));
    rss += e * e;
  }
  return {slope, std::sqrt(rss / (n - 2) / sxx)};
}

std::vector<SlopeFit> summarize_results(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "empty results file");
  const auto header = split(line, ',');
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(1, "missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_schema = col("schema"), c_alg = col("algorithm"), c_k = col("K"),
                    c_sub = col("suboptimality");
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<double>>> data;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw ParseError(lineno, "wrong number of fields");
    if (f[c_schema] != std::to_string(kResultsSchemaVersion))
      throw ParseError(lineno, "unknown results schema version '" + f[c_schema] + "'");
    if (!data.count(f[c_alg])) order.push_back(f[c_alg]);
    auto& per_k = data[f[c_alg]];
    const int K = std::stoi(f[c_k]);
    if (!f[c_sub].empty()) per_k[K].push_back(std::stod(f[c_sub]));
    else per_k[K];
  }
  std::vector<SlopeFit> fits;
  for (const auto& alg : order) {
    SlopeFit fit;
    fit.algorithm = alg;
    for (const auto& [K, vals] : data[alg]) {
      if (vals.empty()) continue;
      fit.K.push_back(K);
      fit.median.push_back(median(vals));
    }
    fit.nonincreasing = true;
    for (std::size_t i = 1; i < fit.median.size(); ++i)
      if (fit.median[i] > fit.median[i - 1]) fit.nonincreasing = false;
    if (fit.K.size() < 3) {
      fit.notice = "fewer than 3 K points; slope omitted";
    } else if (*std::min_element(fit.median.begin(), fit.median.end()) <= 0.0) {
      fit.notice = "nonpositive median; slope omitted";
    } else {
      std::vector<double> xs(fit.K.begin(), fit.K.end());
      const auto [s, se] = fit_loglog(xs, fit.median);
      fit.slope = s;
      fit.stderr_slope = se;
    }
    fits.push_back(std::move(fit));
  }
  return fits;
}

std::vector<SlopeFit> cmd_plot(const std::string& results_path, const std::string& out_dir) {
  const auto fits = summarize_results(read_file(results_path));
  fs::create_directories(out_dir);
  std::ostringstream table;
  table << "algorithm,points,slope,stderr,median_nonincreasing,notice\n";
  for (const auto& f : fits)
    table << f.algorithm << ',' << f.K.size() << ','
          << (f.slope ? format_double(*f.slope) : "") << ','
          << (f.stderr_slope ? format_double(*f.stderr_slope) : "") << ','
          << (f.nonincreasing ? "true" : "false") << ',' << f.notice << '\n';
  write_atomically(fs::path(out_dir) / "slopes.csv", table.str());

  std::ostringstream med;
  med << "algorithm,K,median_suboptimality\n";
  for (const auto& f : fits)
    for (std::size_t i = 0; i < f.K.size(); ++i)
      med << f.algorithm << ',' << f.K[i] << ',' << format_double(f.median[i]) << '\n';
  write_atomically(fs::path(out_dir) / "medians.csv", med.str());

  // Static log-log plot of the medians.
  double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
  for (const auto& f : fits)
    for (std::size_t i = 0; i < f.K.size(); ++i)
      if (f.median[i] > 0.0) {
        xmin = std::min(xmin, std::log10(static_cast<double>(f.K[i])));
        xmax = std::max(xmax, std::log10(static_cast<double>(f.K[i])));
        ymin = std::min(ymin, std::log10(f.median[i]));
        ymax = std::max(ymax, std::log10(f.median[i]));
      }
  const double W = 640, Hgt = 420, pad = 60;
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  auto px = [&](double lx) { return pad + (lx - xmin) / (xmax - xmin) * (W - 2 * pad); };
  auto py = [&](double ly) { return Hgt - pad - (ly - ymin) / (ymax - ymin) * (Hgt - 2 * pad); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hgt << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << pad << "\" y1=\"" << Hgt - pad << "\" x2=\"" << W - pad << "\" y2=\""
      << Hgt - pad << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << Hgt - pad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << Hgt - 15 << "\" text-anchor=\"middle\">log10 K</text>\n"
      << "<text x=\"15\" y=\"" << Hgt / 2 << "\" transform=\"rotate(-90 15 " << Hgt / 2
      << ")\" text-anchor=\"middle\">log10 median suboptimality</text>\n";
  for (std::size_t a = 0; a < fits.size(); ++a) {
    const auto& f = fits[a];
    const char* color = colors[a % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < f.K.size(); ++i)
      if (f.median[i] > 0.0)
        svg << px(std::log10(static_cast<double>(f.K[i]))) << ',' << py(std::log10(f.median[i])) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << W - pad - 150 << "\" y=\"" << pad + 18 * a << "\" fill=\"" << color << "\">"
        << f.algorithm;
    if (f.slope) svg << " slope " << std::to_string(*f.slope).substr(0, 6);
    svg << "</text>\n";
  }
  svg << "</svg>\n";
  write_atomically(fs::path(out_dir) / "suboptimality.svg", svg.str());
  return fits;
}

std::string cmd_diversity(const ExperimentConfig& cfg) {
  const Instance inst = build_instance(cfg);
  const std::string dir = output_dir(cfg);
  fs::create_directories(dir);
  std::ostringstream os;
  os << "K,seed," << diversity_csv_header() << '\n';
  for (int K : cfg.K)
    for (auto seed : cfg.seeds) {
      const OfflineDataset data = collect(inst.mdp, inst.schedule, K, dataset_seed(seed, K));
      const StageSequence d_mu = behavior_occupancy(inst.mdp, data);
      const Comparator comp = resolve_comparator(cfg, inst, d_mu, K);
      const double root = 1.0 / std::sqrt(static_cast<double>(K));
      const auto rep = diversity_report(inst.cls, inst.mdp, comp.policy, d_mu, {0.0, 1.0 / K, root}, &data);
      for (const auto& row : diversity_csv_rows(rep, comp.label, "behavior"))
        os << K << ',' << seed << ',' << row << '\n';
    }
  const fs::path out = fs::path(dir) / "diversity.csv";
  write_atomically(out, os.str());
  return out.string();
}

}  // namespace gopolab
