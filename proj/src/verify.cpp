#include "gopolab/verify.hpp"

#include <algorithm>
#include <sstream>

#include "gopolab/critics.hpp"
#include "gopolab/diversity.hpp"
#include "gopolab/gopo.hpp"
#include "gopolab/instances.hpp"

namespace gopolab {

namespace {

CheckResult residual_check(std::string name, double tol) {
  CheckResult r;
  r.name = std::move(name);
  r.worst_kind = "residual";
  r.tolerance = tol;
  return r;
}

CheckResult margin_check(std::string name, double tol) {
  CheckResult r;
  r.name = std::move(name);
  r.worst_kind = "margin";
  r.tolerance = tol;
  r.worst = kInf;
  return r;
}

void record_residual(CheckResult& r, double v) {
  ++r.cases;
  r.worst = std::max(r.worst, v);
  if (!(v <= r.tolerance)) ++r.failures;
}

void record_margin(CheckResult& r, double v) {
  ++r.cases;
  r.worst = std::min(r.worst, v);
  if (!(v >= -r.tolerance)) ++r.failures;
}

void record_bool(CheckResult& r, bool ok) {
  ++r.cases;
  if (!ok) ++r.failures;
}

struct SmallInstance {
  EpisodicMdp mdp;
  CounterRng rng;
};

SmallInstance small_instance(std::uint64_t seed, int max_s, int max_a, int max_h, int min_a = 1) {
  CounterRng rng(derive_seed(seed, 0x766572));
  const int S = 1 + rng.uniform_int(max_s);
  const int A = min_a + rng.uniform_int(max_a - min_a + 1);
  const int H = 1 + rng.uniform_int(max_h);
  const double noise = rng.uniform() < 0.5 ? 0.0 : 0.01;
  return {random_mdp(S, A, H, 1.0 + rng.uniform(), derive_seed(seed, 1), noise), rng};
}

// Random chain potential; integer-valued half of the time so ties occur.
ChainPotential random_potential(CounterRng& rng) {
  const int H = 2 + rng.uniform_int(2);
  std::vector<int> n(H);
  for (auto& x : n) x = 3 + rng.uniform_int(3);
  const bool ints = rng.uniform() < 0.5;
  auto draw = [&](double hi) {
    return ints ? static_cast<double>(rng.uniform_int(static_cast<int>(hi) + 1)) : rng.uniform(0.0, hi);
  };
  std::vector<Eigen::MatrixXd> loss;
  for (int h = 0; h < H; ++h) {
    Eigen::MatrixXd m(n[h], h + 1 < H ? n[h + 1] : 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = draw(5.0);
    loss.push_back(m);
  }
  Eigen::VectorXd v1(n[0]);
  for (auto& v : v1) v = draw(3.0) - (ints ? 1.0 : 1.5);
  std::vector<Eigen::VectorXd> prior;
  if (rng.uniform() < 0.5) {
    for (int h = 0; h < H; ++h) {
      Eigen::VectorXd w(n[h]);
      for (auto& x : w) x = rng.uniform(-2.0, 0.0);
      const double z = std::log(w.array().exp().sum());
      prior.push_back(w.array() - z);
    }
  }
  return make_potential(std::move(loss), std::move(v1), std::move(prior));
}

}  // namespace

CheckResult check_error_decomposition_suite(int instances, std::uint64_t seed, bool flip_sign) {
  CheckResult r = residual_check("error decomposition", 1e-9);
  for (int i = 0; i < instances; ++i) {
    auto [mdp, rng] = small_instance(derive_seed(seed, i), 5, 3, 5);
    const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
    const StageSequence q = random_q(S, A, H, mdp.bound(), rng);
    const Policy comparator = random_policy(S, A, H, rng);
    const Policy actor = random_policy(S, A, H, rng);
    // Independent assembly of the identity from its pieces.
    const auto comp_eval = evaluate_policy(mdp, comparator);
    const double v_actor = initial_value(mdp, actor);
    double bellman_sum = 0.0;
    for (int h = 0; h < H; ++h) {
      const StageTable err =
          bellman_error(mdp, actor, q[h], h + 1 < H ? q[h + 1] : mdp.zero_table(), h);
      for (std::size_t x = 0; x < err.size(); ++x)
        bellman_sum += comp_eval.occupancy[h].values[x] * err.values[x];
    }
    const EpisodicMdp induced = induced_mdp(mdp, q, actor);
    const double induced_gap = initial_value(induced, comparator) - initial_value(induced, actor);
    const double q1 = actor.average(0, q[0], mdp.initial_state());
    const double lhs = comp_eval.initial_value() - v_actor;
    const double sign = flip_sign ? -1.0 : 1.0;
    const double own = std::abs(lhs - (sign * bellman_sum + q1 - v_actor + induced_gap));
    record_residual(r, std::max(own, check_error_decomposition(mdp, q, comparator, actor)));
  }
  return r;
}

CheckResult check_fixed_point_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("induced-MDP fixed point", 1e-12);
  for (int i = 0; i < instances; ++i) {
    auto [mdp, rng] = small_instance(derive_seed(seed, i), 5, 3, 5);
    const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
    const StageSequence q = random_q(S, A, H, mdp.bound(), rng);
    const Policy pi = random_policy(S, A, H, rng);
    const auto eval = evaluate_policy(induced_mdp(mdp, q, pi), pi);
    double dev = 0.0;
    for (int h = 0; h < H; ++h) dev = std::max(dev, (eval.q[h] - q[h]).max_abs());
    record_residual(r, dev);
  }
  return r;
}

CheckResult check_performance_difference_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("performance difference", 1e-10);
  for (int i = 0; i < instances; ++i) {
    auto [mdp, rng] = small_instance(derive_seed(seed, i), 5, 3, 5);
    const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
    const Policy a = random_policy(S, A, H, rng);
    const Policy b = random_policy(S, A, H, rng);
    record_residual(r, performance_difference_residual(mdp, a, b));
  }
  return r;
}

CheckResult check_bellman_consistency_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("Bellman consistency", 1e-12);
  for (int i = 0; i < instances; ++i) {
    auto [mdp, rng] = small_instance(derive_seed(seed, i), 5, 3, 5);
    const Policy pi = random_policy(mdp.num_states(), mdp.num_actions(), mdp.horizon(), rng);
    const auto eval = evaluate_policy(mdp, pi);
    double dev = 0.0;
    for (int h = 0; h < mdp.horizon(); ++h) {
      const StageTable& next = h + 1 < mdp.horizon() ? eval.q[h + 1] : mdp.zero_table();
      dev = std::max(dev, (bellman_apply(mdp, pi, next, h) - eval.q[h]).max_abs());
    }
    record_residual(r, dev);
  }
  return r;
}

CheckResult check_vsc_oracle_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("VSC chain DP = enumeration", 0.0);
  for (int i = 0; i < instances; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x767363));
    const ChainPotential pot = random_potential(rng);
    const double beta = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 3.0);
    const CriticOutput dp = vsc(pot, beta);
    const BruteForceResult bf = brute_force_vsc(pot, beta);
    const bool same = dp.chain == bf.best.chain && dp.objective == bf.best.objective;
    record_residual(r, same ? 0.0 : std::max(1.0, std::abs(dp.objective - bf.best.objective)));
  }
  return r;
}

CheckResult check_roc_oracle_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("ROC chain DP = enumeration", 0.0);
  for (int i = 0; i < instances; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x726f63));
    const ChainPotential pot = random_potential(rng);
    const double lambdas[] = {0.0, 0.5, 1.0, 2.0, 10.0};
    const double lambda = lambdas[rng.uniform_int(5)];
    const CriticOutput dp = roc(pot, lambda);
    const BruteForceResult bf = brute_force_roc(pot, lambda);
    const bool same = dp.chain == bf.best.chain && dp.objective == bf.best.objective;
    record_residual(r, same ? 0.0 : std::max(1.0, std::abs(dp.objective - bf.best.objective)));
  }
  return r;
}

CheckResult check_psc_marginal_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("PSC marginals = enumeration", 1e-10);
  for (int i = 0; i < instances; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x707363));
    const ChainPotential pot = random_potential(rng);
    const double lambda = rng.uniform(0.0, 2.0);
    const double gamma = rng.uniform(0.0, 2.0);
    const ChainMarginals m = psc_marginals(pot, lambda, gamma);
    const BruteForceResult bf = brute_force_psc(pot, lambda, gamma);
    std::vector<Eigen::VectorXd> exact;
    for (int h = 0; h < pot.horizon(); ++h) exact.push_back(Eigen::VectorXd::Zero(pot.size(h)));
    for (std::size_t c = 0; c < bf.probability.size(); ++c) {
      const auto chain = decode_chain(pot, c);
      for (int h = 0; h < pot.horizon(); ++h) exact[h][chain[h]] += bf.probability[c];
    }
    double dev = 0.0;
    for (int h = 0; h < pot.horizon(); ++h)
      dev = std::max(dev, (m.stage[h] - exact[h]).cwiseAbs().maxCoeff());
    record_residual(r, dev);
  }
  return r;
}

CheckResult check_chi_scan_suite(int instances, std::uint64_t seed) {
  CheckResult r = residual_check("diversity = pair scan", 0.0);
  for (int i = 0; i < instances; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x636869));
    const int S = 1 + rng.uniform_int(3), A = 1 + rng.uniform_int(3), H = 1 + rng.uniform_int(3);
    std::vector<std::vector<StageTable>> cands(H);
    for (auto& stage : cands) {
      const int n = 1 + rng.uniform_int(5);
      for (int k = 0; k < n; ++k) {
        StageTable f(S, A);
        for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
        stage.push_back(f);
      }
    }
    const FunctionClass cls(1.0, cands);
    auto random_dist = [&](bool holes) {
      StageSequence d(H, StageTable(S, A));
      for (auto& stage : d) {
        double z = 0.0;
        for (auto& v : stage.values) {
          v = holes && rng.uniform() < 0.3 ? 0.0 : rng.uniform();
          z += v;
        }
        if (z == 0.0) stage.values[0] = z = 1.0;
        for (auto& v : stage.values) v /= z;
      }
      return d;
    };
    const StageSequence d_pi = random_dist(false), d_mu = random_dist(true);
    const double epsilons[] = {0.0, 0.01, 0.1};
    const double eps = epsilons[rng.uniform_int(3)];
    double scan = 0.0;
    for (int h = 0; h < H; ++h) {
      std::vector<StageTable> diffs;
      for (int a = 0; a < cls.size(h); ++a)
        for (int b = 0; b < cls.size(h); ++b) diffs.push_back(cls.candidate(h, a) - cls.candidate(h, b));
      scan = std::max(scan, chi_discrepancy(diffs, d_pi[h], d_mu[h], eps).value);
    }
    const double got = data_diversity(cls, d_pi, d_mu, eps).value;
    record_residual(r, got == scan ? 0.0 : 1.0);
  }
  return r;
}

CheckResult check_decoupling_suite(int instances, std::uint64_t seed,
                                   const std::vector<double>& lambdas,
                                   const std::vector<double>& epsilons) {
  CheckResult r = margin_check("decoupling margin", 1e-9);
  for (int i = 0; i < instances; ++i) {
    auto [mdp, rng] = small_instance(derive_seed(seed, i, 0x6463), 4, 3, 4, 2);
    const int S = mdp.num_states(), A = mdp.num_actions(), H = mdp.horizon();
    const Policy pi_tilde = random_policy(S, A, H, rng);
    const FunctionClass cls = bellman_closed_class(mdp, pi_tilde, 2, rng);
    std::vector<int> f(H);
    for (int h = 0; h < H; ++h) f[h] = rng.uniform_int(cls.size(h));
    const Policy pi = random_policy(S, A, H, rng);
    const Policy mu = random_policy(S, A, H, rng);
    const StageSequence d_mu = evaluate_policy(mdp, mu).occupancy;
    const int K = 1 + rng.uniform_int(200);
    const std::vector<double> nu(H, 0.0);
    for (double lambda : lambdas)
      for (double eps : epsilons)
        record_margin(r, check_decoupling(cls, mdp, pi, pi_tilde, f, d_mu, K, nu, lambda, eps).margin);
  }
  return r;
}

CheckResult check_regret_suite(int runs, std::uint64_t seed, int T, int num_actions) {
  CheckResult r = margin_check("actor regret bound", 0.0);
  for (int i = 0; i < runs; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x726567));
    const int S = 3, H = 3;
    const EpisodicMdp mdp = random_mdp(S, num_actions, H, 1.0, derive_seed(seed, i, 1));
    std::vector<std::vector<StageTable>> cands(H);
    for (auto& stage : cands)
      for (const auto& f : random_q(S, num_actions, 4, mdp.bound(), rng)) stage.push_back(f);
    const FunctionClass cls(mdp.bound(), cands);
    const OfflineDataset data =
        collect(mdp, BehaviorSchedule::fixed(Policy::uniform(S, num_actions, H)), 50, derive_seed(seed, i, 2));
    GopoConfig cfg;
    cfg.critic = static_cast<CriticKind>(i % 3);
    cfg.beta = 2.0;
    cfg.lambda = 1.0;
    cfg.gamma = 0.1;
    cfg.T = T;
    cfg.eta = default_eta(mdp.bound(), T, num_actions).eta;
    cfg.seed = derive_seed(seed, i, 3);
    const GopoResult res = run(data, cls, cfg);
    const RegretAudit audit = actor_regret_audit(res, mdp, optimal_policy(mdp));
    if (!audit.preconditions_met) {
      ++r.cases;
      ++r.failures;
      continue;
    }
    record_margin(r, audit.bound - audit.regret);
  }
  return r;
}

CheckResult check_containment_suite(int instances, std::uint64_t seed) {
  CheckResult r = margin_check("coverage containments", 1e-9);
  for (int i = 0; i < instances; ++i) {
    CounterRng rng(derive_seed(seed, i, 0x636f76));
    const int S = 2 + rng.uniform_int(3), A = 2, H = 2, d = 2;
    const LinearInstance lin = linear_mdp(S, A, H, d, 1.0, derive_seed(seed, i, 1), 0.1, 0.1);
    const FunctionClass cls = FunctionClass::linear_net(1.0, lin.phi, lin.radius, 0.1, A);
    const Policy pi = random_policy(S, A, H, rng);
    const Policy mu = random_policy(S, A, H, rng);
    const int K = 16 + rng.uniform_int(100);
    const OfflineDataset data = collect(lin.mdp, BehaviorSchedule::fixed(mu), K, derive_seed(seed, i, 2));
    const StageSequence d_mu = behavior_occupancy(lin.mdp, data);
    const PolicyEvaluation eval = evaluate_policy(lin.mdp, pi);

    const double c_root = data_diversity(cls, eval.occupancy, d_mu, 1.0 / std::sqrt(K)).value;
    const double c_zero = data_diversity(cls, eval.occupancy, d_mu, 0.0).value;
    const double conc = concentrability(eval.occupancy, d_mu);
    const auto rcn = relative_condition_number(lin.phi, eval.occupancy, d_mu);
    const double rcn_max = *std::max_element(rcn.begin(), rcn.end());
    const LinearCoverage cov = linear_coverage_report(data, lin.phi, eval, lin.mdp, d_mu, 1.0);
    auto slack = [](double big, double small) {
      return std::isinf(big) ? kInf : (big - small) / std::max(1.0, std::abs(big));
    };
    record_margin(r, slack(c_zero, c_root));
    if (std::isfinite(conc)) record_margin(r, slack(conc, c_zero));
    if (std::isfinite(rcn_max)) record_margin(r, slack(rcn_max, c_zero));
    record_margin(r, slack(cov.c_pevi, cov.c_pacle));
    record_bool(r, c_root >= 0.0 && c_zero >= 0.0 && conc >= 0.0 && rcn_max >= 0.0);
  }
  return r;
}

bool VerifyReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.ok(); });
}

VerifyReport run_verify(VerifyLevel level, bool flip_sign) {
  const int n = level == VerifyLevel::kFull ? 50 : 10;
  const std::uint64_t seed = 20240611;
  VerifyReport rep;
  rep.checks.push_back(check_error_decomposition_suite(n, seed, flip_sign));
  rep.checks.push_back(check_fixed_point_suite(n, seed));
  rep.checks.push_back(check_performance_difference_suite(n, seed));
  rep.checks.push_back(check_bellman_consistency_suite(n, seed));
  rep.checks.push_back(check_vsc_oracle_suite(2 * n, seed));
  rep.checks.push_back(check_roc_oracle_suite(2 * n, seed));
  rep.checks.push_back(check_psc_marginal_suite(2 * n, seed));
  rep.checks.push_back(check_chi_scan_suite(n, seed));
  rep.checks.push_back(check_decoupling_suite(n, seed, {0.1, 1.0, 10.0}, {0.0, 0.01}));
  rep.checks.push_back(check_regret_suite(level == VerifyLevel::kFull ? 20 : 3, seed, 200, 3));
  rep.checks.push_back(check_containment_suite(n, seed));
  return rep;
}

std::string format_report(const VerifyReport& report) {
  std::ostringstream os;
  for (const auto& c : report.checks) {
    os << (c.ok() ? "ok    " : "FAIL  ") << c.name << ": " << c.cases << " cases, " << c.failures
       << " failures, worst " << c.worst_kind << ' ' << format_double(c.worst) << '\n';
  }
  os << (report.ok() ? "all checks passed" : "some checks failed") << '\n';
  return os.str();
}

}  // namespace gopolab
