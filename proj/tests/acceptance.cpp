// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/core.h>

#include "gopolab/common.hpp"
#include "gopolab/critics.hpp"
#include "gopolab/experiment.hpp"
#include "gopolab/verify.hpp"

namespace fs = std::filesystem;
using namespace gopolab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string describe(const CheckResult& c) {
  return fmt::format("{} cases={} failures={} worst {}={:.3g} (tol {:.1g})", c.name, c.cases,
                     c.failures, c.worst_kind, c.worst, c.tolerance);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random chain potential with nonnegative losses and a non-uniform prior.
ChainPotential random_potential(int H, int N, CounterRng& rng) {
  std::vector<Eigen::MatrixXd> loss;
  std::vector<Eigen::VectorXd> prior;
  for (int h = 0; h < H; ++h) {
    Eigen::MatrixXd L(N, h + 1 < H ? N : 1);
    for (int i = 0; i < L.rows(); ++i)
      for (int j = 0; j < L.cols(); ++j) L(i, j) = rng.uniform(0.0, 3.0);
    loss.push_back(L);
    Eigen::VectorXd w(N);
    for (int i = 0; i < N; ++i) w[i] = rng.uniform(0.5, 2.0);
    prior.push_back((w / w.sum()).array().log().matrix());
  }
  Eigen::VectorXd v1(N);
  for (int i = 0; i < N; ++i) v1[i] = rng.uniform(-1.0, 1.0);
  return make_potential(std::move(loss), v1, std::move(prior));
}

std::size_t flat_index(const std::vector<int>& chain, int N) {
  std::size_t f = 0;
  for (int i : chain) f = f * N + static_cast<std::size_t>(i);
  return f;
}

Outcome criterion_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dec = check_error_decomposition_suite(50, 101);
  const auto fix = check_fixed_point_suite(50, 202);
  const double secs = seconds_since(t0);
  const bool pass = dec.ok() && fix.ok() && dec.tolerance <= 1e-9 && fix.tolerance <= 1e-12 &&
                    secs < 10.0;
  return {pass, fmt::format("{}; {}; {:.2f}s", describe(dec), describe(fix), secs)};
}

Outcome criterion_chain_oracles() {
  const auto v = check_vsc_oracle_suite(100, 303);
  const auto r = check_roc_oracle_suite(100, 404);
  const auto m = check_psc_marginal_suite(100, 505);

  // Empirical draws against the enumerated joint on small chains.
  CounterRng rng(606);
  constexpr int kDraws = 100000;
  double worst_tv = 0.0;
  for (int inst = 0; inst < 3; ++inst) {
    const int H = 2, N = 3;
    const auto pot = random_potential(H, N, rng);
    const double lambda = rng.uniform(0.0, 2.0), gamma = rng.uniform(0.0, 1.0);
    const auto exact = brute_force_psc(pot, lambda, gamma).probability;
    std::vector<double> counts(exact.size(), 0.0);
    for (int n = 0; n < kDraws; ++n)
      counts[flat_index(psc(pot, lambda, gamma, derive_seed(707 + inst, n)).chain, N)] += 1.0;
    double tv = 0.0;
    for (std::size_t k = 0; k < exact.size(); ++k) tv += std::abs(counts[k] / kDraws - exact[k]);
    worst_tv = std::max(worst_tv, 0.5 * tv);
  }
  const bool pass = v.ok() && r.ok() && m.ok() && m.tolerance <= 1e-10 && worst_tv <= 0.02;
  return {pass, fmt::format("{}; {}; {}; draw TV {:.4f} (tol 0.02)", describe(v), describe(r),
                            describe(m), worst_tv)};
}

Outcome criterion_regret() {
  const auto c = check_regret_suite(20, 808, 200, 3);
  return {c.ok(), describe(c)};
}

Outcome criterion_decoupling() {
  const auto c = check_decoupling_suite(50, 909, {0.1, 1.0, 10.0}, {0.0, 0.01});
  return {c.ok() && c.tolerance <= 1e-9, describe(c)};
}

Outcome criterion_containments() {
  const auto c = check_containment_suite(50, 1010);
  return {c.ok() && c.cases >= 50, describe(c)};
}

Outcome criterion_scaling(const fs::path& work) {
  auto cfg = load_config((fs::path(GOPOLAB_SOURCE_DIR) / "configs" / "scaling.json").string());
  cfg.output = (work / "scaling").string();
  const auto t0 = std::chrono::steady_clock::now();
  cmd_gen(cfg);
  cmd_run(cfg);
  const auto fits = summarize_results(read_file(fs::path(cfg.output) / "results.csv"));
  const double secs = seconds_since(t0);
  bool pass = fits.size() == 3 && secs < 1800.0;
  std::string detail;
  for (const auto& f : fits) {
    const bool in_window = f.slope && *f.slope >= -0.75 && *f.slope <= -0.30;
    pass = pass && f.nonincreasing && in_window;
    detail += fmt::format("{} slope {:.4f} (se {:.4f}) {}; ", f.algorithm, f.slope.value_or(NAN),
                          f.stderr_slope.value_or(NAN),
                          f.nonincreasing ? "nonincreasing" : "NOT nonincreasing");
  }
  return {pass, detail + fmt::format("window [-0.75, -0.30]; {:.1f}s", secs)};
}

Outcome criterion_prior_fit() {
  CounterRng rng(1111);
  const int H = 2, N = 4;
  const auto pot = random_potential(H, N, rng);
  constexpr int kDraws = 100000;
  std::vector<double> counts(16, 0.0);
  for (int n = 0; n < kDraws; ++n)
    counts[flat_index(psc(pot, 0.0, 0.0, derive_seed(1212, n)).chain, N)] += 1.0;
  double stat = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double expected = kDraws * std::exp(pot.log_prior[0][i] + pot.log_prior[1][j]);
      const double d = counts[i * N + j] - expected;
      stat += d * d / expected;
    }
  const boost::math::chi_squared dist(N * N - 1);
  const double p_value = boost::math::cdf(boost::math::complement(dist, stat));
  return {p_value > 1e-3, fmt::format("chi2 = {:.3f}, df = {}, p = {:.4f} (significance 1e-3)",
                                      stat, N * N - 1, p_value)};
}

Outcome criterion_determinism(const fs::path& work) {
  const auto base = load_config((fs::path(GOPOLAB_SOURCE_DIR) / "configs" / "smoke.json").string());
  std::vector<std::string> results, datasets;
  for (const char* name : {"det_a", "det_b"}) {
    auto cfg = base;
    cfg.output = (work / name).string();
    cmd_gen(cfg);
    cmd_run(cfg);
    results.push_back(read_file(fs::path(cfg.output) / "results.csv"));
    datasets.push_back(read_file(fs::path(cfg.output) / "data" / "K32_s2.txt"));
  }
  const bool pass = !results[0].empty() && results[0] == results[1] && datasets[0] == datasets[1];
  const auto rows = std::count(results[0].begin(), results[0].end(), '\n') - 1;
  return {pass, fmt::format("{} result rows and datasets compared byte for byte", rows)};
}

}  // namespace

int main() {
  const fs::path work = fs::path(GOPOLAB_BINARY_DIR) / "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"identities", criterion_identities},
      {"chain critics vs enumeration", criterion_chain_oracles},
      {"actor regret", criterion_regret},
      {"decoupling margin", criterion_decoupling},
      {"coverage containments", criterion_containments},
      {"scaling", [&] { return criterion_scaling(work); }},
      {"posterior prior fit", criterion_prior_fit},
      {"determinism", [&] { return criterion_determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("criterion {} [{}]: {} | {}", i + 1, criteria[i].first,
                             o.pass ? "PASS" : "FAIL", o.detail)
              << std::endl;
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
