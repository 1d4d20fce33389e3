#include <cmath>
#include <random>

#include "doctest.h"

#include "gopolab/instances.hpp"
#include "gopolab/mdp.hpp"

using namespace gopolab;

namespace {

// Transitions and rewards independent of everything: for testing telescoping sums.
EpisodicMdp one_state_chain(int H, double b) {
  std::vector<double> P(static_cast<std::size_t>(H) * 2, 1.0);
  StageSequence r(H, StageTable(1, 2, b / H));
  return EpisodicMdp(1, 2, H, P, r, {}, 0, b);
}

// Extended-precision T_h^pi f_next, written out from the definition.
StageTable bellman_oracle(const EpisodicMdp& m, const Policy& pi, const StageTable& f_next, int h) {
  StageTable out(m.num_states(), m.num_actions());
  for (int s = 0; s < m.num_states(); ++s)
    for (int a = 0; a < m.num_actions(); ++a) {
      long double acc = m.reward(h)(s, a);
      if (h + 1 < m.horizon())
        for (int sn = 0; sn < m.num_states(); ++sn)
          for (int an = 0; an < m.num_actions(); ++an)
            acc += static_cast<long double>(m.transition(h, s, a, sn)) * pi(h + 1, sn, an) *
                   f_next(sn, an);
      out(s, a) = static_cast<double>(acc);
    }
  return out;
}

double max_diff(const StageTable& a, const StageTable& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

int draw(std::mt19937_64& gen, const double* p, int n) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
  double c = 0.0;
  for (int i = 0; i < n; ++i) {
    c += p[i];
    if (u < c) return i;
  }
  return n - 1;
}

}  // namespace

TEST_SUITE("mdp") {
  TEST_CASE("telescoping chain has value b") {
    const auto m = one_state_chain(5, 2.0);
    CHECK(initial_value(m, Policy::uniform(1, 2, 5)) == doctest::Approx(2.0).epsilon(1e-14));
  }

  TEST_CASE("single step Q equals the reward") {
    const auto m = random_mdp(3, 2, 1, 1.0, 11);
    CounterRng rng(3);
    const auto ev = evaluate_policy(m, random_policy(3, 2, 1, rng));
    CHECK(ev.q[0] == m.reward(0));
  }

  TEST_CASE("value matches Monte Carlo rollouts within three standard errors") {
    const auto m = random_mdp(3, 2, 4, 1.0, 12, 0.02);
    CounterRng rng(4);
    const Policy pi = random_policy(3, 2, 4, rng);
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    constexpr int kRollouts = 1000000;
    double sum = 0.0, sum_sq = 0.0;
    for (int n = 0; n < kRollouts; ++n) {
      int s = m.initial_state();
      double ret = 0.0;
      for (int h = 0; h < 4; ++h) {
        const int a = draw(gen, &pi.stage(h).values[static_cast<std::size_t>(s) * 2], 2);
        ret += m.reward(h)(s, a) + noise(gen);
        s = draw(gen, m.next_state_distribution(h, s, a).data(), 3);
      }
      sum += ret;
      sum_sq += ret * ret;
    }
    const double mean = sum / kRollouts;
    const double se = std::sqrt((sum_sq / kRollouts - mean * mean) / kRollouts);
    CHECK(std::abs(initial_value(m, pi) - mean) < 3.0 * se);
  }

  TEST_CASE("occupancy sums to one per step and starts at s1") {
    const auto m = random_mdp(4, 3, 5, 1.0, 13);
    CounterRng rng(5);
    const Policy pi = random_policy(4, 3, 5, rng);
    const auto ev = evaluate_policy(m, pi);
    for (int h = 0; h < 5; ++h) {
      double total = 0.0;
      for (double v : ev.occupancy[h].values) total += v;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (int a = 0; a < 3; ++a) CHECK(ev.occupancy[0](0, a) == doctest::Approx(pi(0, 0, a)));
  }

  TEST_CASE("shape mismatch is a contract violation") {
    const auto m = random_mdp(3, 2, 3, 1.0, 14);
    CHECK_THROWS_AS(evaluate_policy(m, Policy::uniform(3, 2, 4)), ContractViolation);
    CHECK_THROWS_AS(evaluate_policy(m, Policy::uniform(2, 2, 3)), ContractViolation);
  }

  TEST_CASE("invalid MDPs are rejected") {
    StageSequence r(1, StageTable(1, 1, 0.5));
    CHECK_THROWS_AS(EpisodicMdp(1, 1, 1, {0.9}, r, {}, 0, 1.0), ContractViolation);
    StageSequence big(1, StageTable(1, 1, 1.5));
    CHECK_THROWS_AS(EpisodicMdp(1, 1, 1, {1.0}, big, {}, 0, 1.0), ContractViolation);
    CHECK_THROWS_AS(EpisodicMdp(1, 1, 1, {1.0}, r, {}, 0, 0.5), ContractViolation);
  }

  TEST_CASE("bellman_apply conventions and summation oracle") {
    const auto m = random_mdp(4, 3, 4, 1.0, 15);
    CounterRng rng(6);
    const Policy pi = random_policy(4, 3, 4, rng);
    StageTable junk(4, 3, 0.7);
    CHECK(bellman_apply(m, pi, junk, 3) == m.reward(3));
    const StageTable shifted = bellman_apply(m, pi, StageTable(4, 3, 0.25), 1);
    CHECK(max_diff(shifted - m.reward(1), StageTable(4, 3, 0.25)) < 1e-15);
    for (int trial = 0; trial < 20; ++trial) {
      const auto f = random_q(4, 3, 4, 1.0, rng);
      for (int h = 0; h < 4; ++h) {
        const StageTable& next = h + 1 < 4 ? f[h + 1] : junk;
        CHECK(max_diff(bellman_apply(m, pi, next, h), bellman_oracle(m, pi, next, h)) < 1e-12);
        CHECK(max_diff(bellman_error(m, pi, f[h], next, h),
                       bellman_oracle(m, pi, next, h) - f[h]) < 1e-12);
      }
    }
  }

  TEST_CASE("Q^pi is a Bellman fixed point") {
    const auto m = random_mdp(3, 2, 5, 1.0, 16);
    CounterRng rng(7);
    const Policy pi = random_policy(3, 2, 5, rng);
    const auto q = evaluate_policy(m, pi).q;
    for (int h = 0; h < 5; ++h) {
      const StageTable next = h + 1 < 5 ? q[h + 1] : m.zero_table();
      CHECK(bellman_error(m, pi, q[h], next, h).max_abs() < 1e-12);
    }
  }

  TEST_CASE("induced MDP reproduces the given Q") {
    const auto m = random_mdp(3, 3, 4, 1.0, 17);
    CounterRng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      const Policy pi = random_policy(3, 3, 4, rng);
      const auto q = random_q(3, 3, 4, 1.0, rng);
      const auto ev = evaluate_policy(induced_mdp(m, q, pi), pi);
      for (int h = 0; h < 4; ++h) CHECK(max_diff(ev.q[h], q[h]) < 1e-12);
    }
    const Policy pi = random_policy(3, 3, 4, rng);
    const auto exact = induced_mdp(m, evaluate_policy(m, pi).q, pi);
    for (int h = 0; h < 4; ++h) CHECK(max_diff(exact.reward(h), m.reward(h)) < 1e-12);
  }

  TEST_CASE("induced MDP of the zero function") {
    const auto m = random_mdp(3, 2, 3, 1.0, 18);
    CounterRng rng(9);
    const Policy pi = random_policy(3, 2, 3, rng);
    const auto zero = StageSequence(3, m.zero_table());
    const auto ind = induced_mdp(m, zero, pi);
    // r' = r - (T 0 - 0) = r - r = 0 at every step.
    for (int h = 0; h < 3; ++h) CHECK(ind.reward(h).max_abs() < 1e-15);
  }

  TEST_CASE("suboptimality") {
    const auto m = random_mdp(4, 2, 3, 1.0, 19);
    CounterRng rng(10);
    const Policy a = random_policy(4, 2, 3, rng), b = random_policy(4, 2, 3, rng);
    CHECK(suboptimality(m, a, a) == 0.0);
    CHECK(suboptimality(m, optimal_policy(m), Policy::uniform(4, 2, 3)) >= 0.0);
    CHECK(suboptimality(m, a, b) ==
          doctest::Approx(initial_value(m, a) - initial_value(m, b)).epsilon(1e-12));
    const std::vector<Policy> mix = {a, b};
    CHECK(suboptimality(m, a, mix) ==
          doctest::Approx(0.5 * (initial_value(m, a) - initial_value(m, b))).epsilon(1e-12));
  }

  TEST_CASE("error decomposition and performance difference are identities") {
    CounterRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = random_mdp(3, 2, 5, 1.0, 100 + trial);
      const Policy comp = random_policy(3, 2, 5, rng), actor = random_policy(3, 2, 5, rng);
      CHECK(check_error_decomposition(m, random_q(3, 2, 5, 1.0, rng), comp, actor) < 1e-9);
      CHECK(check_error_decomposition(m, evaluate_policy(m, actor).q, comp, actor) < 1e-10);
      CHECK(performance_difference_residual(m, comp, actor) < 1e-10);
    }
  }

  TEST_CASE("optimal policy") {
    StageSequence r(1, StageTable(1, 2));
    r[0](0, 0) = 0.2;
    r[0](0, 1) = 0.9;
    const EpisodicMdp bandit(1, 2, 1, {1.0, 1.0}, r, {}, 0, 1.0);
    CHECK(optimal_policy(bandit)(0, 0, 1) == 1.0);
    const auto single = random_mdp(3, 1, 3, 1.0, 20);
    CHECK(optimal_policy(single) == Policy::uniform(3, 1, 3));
    const auto m = random_mdp(4, 3, 4, 1.0, 21);
    const double best = initial_value(m, optimal_policy(m));
    CounterRng rng(12);
    for (int i = 0; i < 100; ++i) CHECK(best >= initial_value(m, random_policy(4, 3, 4, rng)) - 1e-12);
  }

  TEST_CASE("MDP JSON round trip preserves the fingerprint") {
    const auto m = random_mdp(3, 2, 3, 1.0, 22, 0.05);
    const auto back = mdp_from_json(to_json(m));
    CHECK(back == m);
    CHECK(fingerprint(back) == fingerprint(m));
  }
}
