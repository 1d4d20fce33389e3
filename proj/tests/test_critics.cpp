#include <cmath>

#include "doctest.h"

#include "gopolab/critics.hpp"
#include "gopolab/instances.hpp"

using namespace gopolab;

namespace {

ChainPotential random_potential(int H, int N, CounterRng& rng, bool with_prior = false) {
  std::vector<Eigen::MatrixXd> loss;
  std::vector<Eigen::VectorXd> prior;
  for (int h = 0; h < H; ++h) {
    Eigen::MatrixXd L(N, h + 1 < H ? N : 1);
    for (int i = 0; i < L.size(); ++i) L.data()[i] = rng.uniform(0.0, 4.0);
    loss.push_back(L);
    Eigen::VectorXd w(N);
    for (int i = 0; i < N; ++i) w[i] = rng.uniform(0.2, 1.0);
    prior.push_back((w / w.sum()).array().log().matrix());
  }
  Eigen::VectorXd v1(N);
  for (int i = 0; i < N; ++i) v1[i] = rng.uniform(-1.0, 1.0);
  return make_potential(std::move(loss), v1, with_prior ? prior : std::vector<Eigen::VectorXd>{});
}

double chain_excess(const ChainPotential& pot, const std::vector<int>& c) {
  double total = 0.0;
  for (int h = 0; h < pot.horizon(); ++h) total += pot.excess(h, c[h], h + 1 < pot.horizon() ? c[h + 1] : 0);
  return total;
}

}  // namespace

TEST_SUITE("critics") {
  TEST_CASE("potential invariants from a dataset") {
    const auto m = random_mdp(3, 2, 3, 1.0, 1, 0.05);
    CounterRng rng(1);
    const Policy pi = random_policy(3, 2, 3, rng);
    const auto cls = bellman_closed_class(m, pi, 2, rng);
    const auto data = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 25, 1);
    const auto pot = make_potential(build_td_matrix(data, cls, pi), cls, pi, m.initial_state());
    for (int h = 0; h < pot.horizon(); ++h) {
      for (int j = 0; j < pot.next_size(h); ++j)
        for (int i = 0; i < pot.size(h); ++i) CHECK(pot.column_min[h][j] <= pot.loss[h](i, j));
      double lse = -kInf;
      for (int i = 0; i < pot.size(h); ++i) lse = std::max(lse, pot.log_prior[h][i]);
      double sum = 0.0;
      for (int i = 0; i < pot.size(h); ++i) sum += std::exp(pot.log_prior[h][i] - lse);
      CHECK(std::abs(lse + std::log(sum)) < 1e-10);
    }
    for (int i = 0; i < cls.size(0); ++i) {
      CHECK(pot.initial_value[i] == doctest::Approx(pi.average(0, cls.candidate(0, i), m.initial_state())));
      CHECK(std::abs(pot.initial_value[i]) <= 1.0);
    }
  }

  TEST_CASE("VSC hand trace with beta = 0") {
    Eigen::MatrixXd L0(3, 3), L1(3, 1);
    L0 << 0.0, 0.5, 2.0,
          1.0, 0.2, 2.0,
          1.0, 0.2, 2.0;
    L1 << 1.0, 0.0, 2.0;
    Eigen::VectorXd v1(3);
    v1 << -1.0, 0.3, 0.1;
    const auto pot = make_potential({L0, L1}, v1);
    // Stage 2 admits only candidate 1; stage 1 then admits {1, 2}; min v1 picks 2.
    const auto out = vsc(pot, 0.0);
    CHECK(out.chain == std::vector<int>{2, 1});
    CHECK(out.objective == 0.1);
    CHECK(out.version_space_sizes == std::vector<int>{2, 1});
    // A vacuous constraint returns argmin v1.
    CHECK(vsc(pot, 10.0).chain[0] == 0);
  }

  TEST_CASE("VSC rejects a negative beta") {
    Eigen::MatrixXd L0(1, 1), L1(1, 1);
    L0 << 0.0;
    L1 << 0.0;
    CHECK_NOTHROW(vsc(make_potential({L0, L1}, Eigen::VectorXd::Zero(1)), 0.0));
    CHECK_THROWS_AS(vsc(make_potential({L0, L1}, Eigen::VectorXd::Zero(1)), -1.0), ContractViolation);
  }

  TEST_CASE("chain DP equals enumeration") {
    CounterRng rng(2);
    for (int trial = 0; trial < 60; ++trial) {
      const int H = 2 + trial % 3, N = 2 + trial % 4;
      const auto pot = random_potential(H, N, rng);
      const double beta = rng.uniform(0.0, 3.0), lambda = rng.uniform(0.0, 5.0);
      const auto v = vsc(pot, beta);
      const auto bv = brute_force_vsc(pot, beta).best;
      CHECK(v.chain == bv.chain);
      CHECK(v.objective == bv.objective);
      const auto r = roc(pot, lambda);
      const auto br = brute_force_roc(pot, lambda).best;
      CHECK(r.chain == br.chain);
      CHECK(r.objective == br.objective);
      CHECK(r.objective == doctest::Approx(lambda * pot.initial_value[r.chain[0]] + chain_excess(pot, r.chain)));
    }
  }

  TEST_CASE("VSC objective is nonincreasing in beta") {
    CounterRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pot = random_potential(3, 4, rng);
      double prev = kInf;
      std::vector<int> prev_sizes(3, 0);
      for (double beta : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
        const auto out = vsc(pot, beta);
        CHECK(out.objective <= prev);
        for (int h = 0; h < 3; ++h) CHECK(out.version_space_sizes[h] >= prev_sizes[h]);
        prev = out.objective;
        prev_sizes = out.version_space_sizes;
      }
    }
  }

  TEST_CASE("ROC cost is concave and nondecreasing after the min-v1 shift") {
    CounterRng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pot = random_potential(3, 4, rng);
      const double vmin = pot.initial_value.minCoeff();
      std::vector<double> g;
      for (int k = 0; k <= 40; ++k) {
        const double lambda = 0.25 * k;
        g.push_back(roc(pot, lambda).objective);
        if (k > 0) CHECK(g[k] - lambda * vmin >= g[k - 1] - (lambda - 0.25) * vmin - 1e-12);
        if (k > 1) CHECK(g[k] - 2.0 * g[k - 1] + g[k - 2] <= 1e-12);
      }
    }
  }

  TEST_CASE("ROC limits") {
    CounterRng rng(5);
    const auto pot = random_potential(3, 5, rng);
    Eigen::Index best;
    pot.initial_value.minCoeff(&best);
    CHECK(roc(pot, 1e12).chain[0] == static_cast<int>(best));

    // A zero-TD-error chain exists when the class holds Q^pi exactly.
    const auto m = random_mdp(3, 2, 3, 1.0, 5, 0.05);
    const Policy pi = random_policy(3, 2, 3, rng);
    const auto cls = bellman_closed_class(m, pi, 2, rng);
    const auto data = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 40, 5);
    const auto real = make_potential(build_td_matrix(data, cls, pi), cls, pi, m.initial_state());
    const auto r0 = roc(real, 0.0);
    CHECK(r0.objective == brute_force_roc(real, 0.0).best.objective);
    CHECK(r0.objective >= 0.0);
  }

  TEST_CASE("brute force guards and degenerate classes") {
    Eigen::MatrixXd one(1, 1), last(1, 1);
    one << 0.3;
    last << 0.7;
    const auto single = make_potential({one, one, last}, Eigen::VectorXd::Constant(1, 0.2));
    const auto p = brute_force_psc(single, 1.0, 1.0).probability;
    REQUIRE(p.size() == 1);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(psc(single, 1.0, 1.0, 9).chain == std::vector<int>{0, 0, 0});

    CounterRng rng(6);
    const auto pot = random_potential(3, 5, rng, true);
    double total = 0.0;
    for (double v : brute_force_psc(pot, 0.7, 0.3).probability) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK_THROWS_AS(brute_force_roc(random_potential(7, 8, rng), 1.0), ContractViolation);
  }

  TEST_CASE("PSC marginals and concentration") {
    CounterRng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pot = random_potential(2 + trial % 2, 3 + trial % 3, rng, trial % 2 == 0);
      const double lambda = rng.uniform(0.0, 3.0), gamma = rng.uniform(0.0, 2.0);
      const auto m = psc_marginals(pot, lambda, gamma);
      const auto exact = brute_force_psc(pot, lambda, gamma).probability;
      std::vector<Eigen::VectorXd> oracle;
      for (int h = 0; h < pot.horizon(); ++h) oracle.push_back(Eigen::VectorXd::Zero(pot.size(h)));
      for (std::size_t c = 0; c < exact.size(); ++c) {
        const auto chain = decode_chain(pot, c);
        for (int h = 0; h < pot.horizon(); ++h) oracle[h][chain[h]] += exact[c];
      }
      for (int h = 0; h < pot.horizon(); ++h) CHECK((m.stage[h] - oracle[h]).cwiseAbs().maxCoeff() < 1e-10);
    }
    const auto pot = random_potential(2, 4, rng);
    Eigen::VectorXd sorted = pot.initial_value;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    Eigen::Index best;
    pot.initial_value.minCoeff(&best);
    const double lambda = 100.0 / (sorted[1] - sorted[0]);
    CHECK(psc_marginals(pot, lambda, 0.5).stage[0][best] > 0.999);
  }

  TEST_CASE("PSC draws match the exact posterior") {
    CounterRng rng(8);
    const auto pot = random_potential(2, 3, rng, true);
    const auto exact = brute_force_psc(pot, 0.8, 0.6).probability;
    std::vector<double> counts(exact.size(), 0.0);
    constexpr int kDraws = 100000;
    for (int n = 0; n < kDraws; ++n) {
      const auto c = psc(pot, 0.8, 0.6, derive_seed(8, n)).chain;
      counts[c[0] * 3 + c[1]] += 1.0;
    }
    double tv = 0.0;
    for (std::size_t k = 0; k < exact.size(); ++k) tv += std::abs(counts[k] / kDraws - exact[k]);
    CHECK(0.5 * tv < 0.02);
    CHECK(psc(pot, 0.8, 0.6, 42).chain == psc(pot, 0.8, 0.6, 42).chain);
  }

  TEST_CASE("PSC mean excess with the theorem gamma") {
    const auto m = random_mdp(3, 2, 2, 1.0, 9, 0.05);
    CounterRng rng(9);
    const Policy pi = random_policy(3, 2, 2, rng);
    const auto cls = bellman_closed_class(m, pi, 3, rng);
    const auto data = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 2)), 50, 9);
    const auto pot = make_potential(build_td_matrix(data, cls, pi), cls, pi, m.initial_state());
    const double gamma = theorem_gamma_psc(1.0), lambda = 2.0;
    const auto exact = brute_force_psc(pot, lambda, gamma).probability;
    double mean = 0.0, second = 0.0;
    for (std::size_t c = 0; c < exact.size(); ++c) {
      const double e = chain_excess(pot, decode_chain(pot, c));
      mean += exact[c] * e;
      second += exact[c] * e * e;
    }
    const double se = std::sqrt((second - mean * mean) / 200.0);
    double sample = 0.0;
    for (int n = 0; n < 200; ++n) sample += chain_excess(pot, psc(pot, lambda, gamma, derive_seed(9, n)).chain);
    CHECK(std::abs(sample / 200.0 - mean) <= 3.0 * se);
    CHECK(psc(pot, lambda, gamma, 1).parameters.dump().find("gamma") != std::string::npos);
  }

  TEST_CASE("parameter formulas") {
    CHECK(theorem_beta(1.0, 64, 1.0 / 64, 0.0, 3, 2.0, 0.1) == doctest::Approx(1.0 + 3.0 * std::log(30.0)));
    CHECK(theorem_beta(1.0, 64, 1.0 / 64, 0.0, 3, 2.0, 0.1) == doctest::Approx(11.204).epsilon(1e-4));
    CHECK(theorem_beta(1.0, 10, 0.0, 0.0, 1, 0.5, 0.2) == doctest::Approx(std::log(5.0)));
    CHECK(theorem_beta(1.0, 10, 0.0, 0.0, 1, 3.0, 0.2) == doctest::Approx(3.0));
    const double base = theorem_beta(2.0, 10, 0.1, 0.05, 2, 1.0, 0.5);
    const double tail = 2 * 4.0 * std::log(4.0);
    CHECK(theorem_beta(2.0, 20, 0.1, 0.05, 2, 1.0, 0.5) - tail ==
          doctest::Approx(2.0 * (base - tail)));
    CHECK(theorem_beta(2.0, 10, 0.1, 0.05, 2, 1.0, 0.5, 3.0) == doctest::Approx(3.0 * base));
    CHECK(theorem_gamma_psc(1.0) == doctest::Approx(1.0 / (144.0 * (std::exp(1.0) - 2.0))));
    CHECK(theorem_gamma_psc(2.0) == doctest::Approx(theorem_gamma_psc(1.0) / 4.0));
    CHECK(theorem_lambda_roc(1.0, 100, 0.01, 2, 1.0, 0.1, 1.0) > 0.0);
    CHECK(theorem_lambda_psc(1.0, 100, 0.01, 2, 1.0, 0.1, theorem_gamma_psc(1.0), 1.0) > 0.0);
  }
}
