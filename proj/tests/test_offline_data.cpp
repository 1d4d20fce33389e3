#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "gopolab/instances.hpp"
#include "gopolab/offline_data.hpp"

using namespace gopolab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(GOPOLAB_BINARY_DIR) / "unit_scratch";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double td_oracle(const StageTable& f, const StageTable& g, const Policy& pi, int h, int H,
                 const Transition& z) {
  long double next = 0.0L;
  if (h + 1 < H)
    for (int a = 0; a < g.num_actions; ++a) next += static_cast<long double>(pi(h + 1, z.s_next, a)) * g(z.s_next, a);
  const long double res = f(z.s, z.a) - z.r - next;
  return static_cast<double>(res * res);
}

}  // namespace

TEST_SUITE("offline_data") {
  TEST_CASE("collection counts and determinism") {
    const auto m = random_mdp(3, 2, 3, 1.0, 1, 0.05);
    const auto d = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 10, 7);
    int transitions = 0;
    for (const auto& ep : d.episodes) transitions += static_cast<int>(ep.size());
    CHECK(transitions == 30);
    CHECK(collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 10, 7) == d);
    CHECK_FALSE(collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 10, 8) == d);
    const auto g1 = collect(m, BehaviorSchedule::greedy_so_far(), 40, 3);
    CHECK(collect(m, BehaviorSchedule::greedy_so_far(), 40, 3) == g1);
  }

  TEST_CASE("deterministic MDP with repeated actions gives identical episodes") {
    const auto m = corridor(4, 1.0);
    const auto pi = Policy::deterministic(std::vector<std::vector<int>>(4, std::vector<int>(3, 1)), 2);
    const auto d = collect(m, BehaviorSchedule::fixed(pi), 6, 2);
    for (const auto& ep : d.episodes) CHECK(ep == d.episodes.front());
  }

  TEST_CASE("adaptive prefixes do not depend on later episodes") {
    const auto m = random_mdp(3, 2, 3, 1.0, 4);
    const auto short_run = collect(m, BehaviorSchedule::greedy_so_far(0.2), 15, 9);
    const auto long_run = collect(m, BehaviorSchedule::greedy_so_far(0.2), 30, 9);
    for (int k = 0; k < 15; ++k) CHECK(long_run.episodes[k] == short_run.episodes[k]);
    const auto mus = realized_behavior(long_run);
    CHECK(mus.size() == 30);
  }

  TEST_CASE("empirical occupancy converges to the exact mixture occupancy") {
    const auto m = random_mdp(3, 2, 3, 1.0, 5);
    CounterRng rng(5);
    const auto d = collect(m, BehaviorSchedule::fixed(random_policy(3, 2, 3, rng)), 100000, 5);
    const auto exact = behavior_occupancy(m, d);
    const auto emp = empirical_occupancy(d);
    for (int h = 0; h < 3; ++h) {
      double tv = 0.0;
      for (std::size_t i = 0; i < exact[h].size(); ++i)
        tv += std::abs(exact[h].values[i] - emp[h].values[i]);
      CHECK(0.5 * tv < 0.01);
    }
  }

  TEST_CASE("round-robin mixture occupancy is the average") {
    const auto m = random_mdp(3, 2, 2, 1.0, 6);
    CounterRng rng(6);
    const Policy a = random_policy(3, 2, 2, rng), b = random_policy(3, 2, 2, rng);
    const auto d = collect(m, BehaviorSchedule::round_robin({a, b}), 4, 1);
    const auto occ = behavior_occupancy(m, d);
    const auto da = evaluate_policy(m, a).occupancy, db = evaluate_policy(m, b).occupancy;
    for (int h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < occ[h].size(); ++i)
        CHECK(occ[h].values[i] == doctest::Approx(0.5 * (da[h].values[i] + db[h].values[i])));
  }

  TEST_CASE("td loss") {
    const Policy pi = Policy::uniform(2, 2, 2);
    StageTable f(2, 2), zero(2, 2);
    f(1, 0) = 0.3;
    CHECK(td_loss(f, zero, pi, 1, {1, 0, 0.3, 0}) == 0.0);
    CHECK(td_loss(zero, zero, pi, 1, {0, 0, 1.0, 1}) == 1.0);
    CounterRng rng(7);
    for (int i = 0; i < 50; ++i) {
      const auto q = random_q(2, 2, 2, 1.0, rng);
      const Policy p = random_policy(2, 2, 2, rng);
      const Transition z{rng.uniform_int(2), rng.uniform_int(2), rng.uniform(), rng.uniform_int(2)};
      CHECK(std::abs(td_loss(q[0], q[1], p, 0, z) - td_oracle(q[0], q[1], p, 0, 2, z)) < 1e-14);
    }
  }

  TEST_CASE("TD matrix against a triple loop") {
    const auto m = random_mdp(3, 2, 2, 1.0, 8, 0.05);
    CounterRng rng(8);
    const Policy pi = random_policy(3, 2, 2, rng);
    std::vector<std::vector<StageTable>> cands(2);
    for (auto& stage : cands)
      for (int i = 0; i < 3; ++i) stage.push_back(random_q(3, 2, 1, 1.0, rng)[0]);
    const FunctionClass cls(1.0, cands);
    const auto d = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 2)), 5, 8);
    const auto td = build_td_matrix(d, cls, pi);
    CHECK(td.loss[0].rows() == 3);
    CHECK(td.loss[0].cols() == 3);
    CHECK(td.loss[1].cols() == 1);
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < td.loss[h].cols(); ++j) {
          long double ref = 0.0L;
          const StageTable& next = h + 1 < 2 ? cls.candidate(h + 1, j) : m.zero_table();
          for (const auto& ep : d.episodes) ref += td_oracle(cls.candidate(h, i), next, pi, h, 2, ep[h]);
          CHECK(std::abs(td.at(h, i, j) - static_cast<double>(ref)) < 1e-12);
        }
  }

  TEST_CASE("TD matrix: empty data, duplication, episode order") {
    const auto m = random_mdp(3, 2, 3, 1.0, 9, 0.05);
    CounterRng rng(9);
    const auto cls = bellman_closed_class(m, Policy::uniform(3, 2, 3), 2, rng);
    const Policy pi = random_policy(3, 2, 3, rng);
    const auto empty = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 0, 1);
    for (const auto& L : build_td_matrix(empty, cls, pi).loss) CHECK(L.cwiseAbs().maxCoeff() == 0.0);

    auto d = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 12, 2);
    const auto base = build_td_matrix(d, cls, pi);
    auto doubled = d;
    doubled.episodes.insert(doubled.episodes.end(), d.episodes.begin(), d.episodes.end());
    const auto twice = build_td_matrix(doubled, cls, pi);
    for (int h = 0; h < 3; ++h)
      CHECK((twice.loss[h] - 2.0 * base.loss[h]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + base.loss[h].cwiseAbs().maxCoeff()));

    auto shuffled = d;
    std::reverse(shuffled.episodes.begin(), shuffled.episodes.end());
    std::swap(shuffled.episodes[0], shuffled.episodes[5]);
    const auto perm = build_td_matrix(shuffled, cls, pi);
    for (int h = 0; h < 3; ++h) CHECK(perm.loss[h] == base.loss[h]);
  }

  TEST_CASE("exact regression candidate usually has the smallest loss") {
    const auto m = random_mdp(3, 2, 2, 1.0, 10, 0.05);
    const Policy pi = Policy::uniform(3, 2, 2);
    const StageTable target = bellman_apply(m, pi, m.zero_table(), 1);
    CounterRng rng(10);
    std::vector<std::vector<StageTable>> cands(2);
    cands[0].push_back(m.zero_table());
    cands[1].push_back(target);
    for (int i = 0; i < 4; ++i) {
      StageTable f = target;
      for (auto& v : f.values) v += rng.uniform(-0.05, 0.05);
      cands[1].push_back(f);
    }
    const FunctionClass cls(1.0, cands);
    int wins = 0, comparisons = 0;
    for (int rep = 0; rep < 200; ++rep) {
      const auto d = collect(m, BehaviorSchedule::fixed(pi), 20, 1000 + rep);
      const auto L = build_td_matrix(d, cls, pi).loss[1];
      for (int i = 1; i < 5; ++i, ++comparisons) wins += L(0, 0) <= L(i, 0);
    }
    CHECK(wins >= 0.6 * comparisons);
  }

  TEST_CASE("dataset files") {
    const auto m = random_mdp(3, 2, 3, 1.0, 11, 0.05);
    const auto d = collect(m, BehaviorSchedule::greedy_so_far(), 7, 4);
    const auto path = scratch("roundtrip.txt");
    save_dataset(d, path.string());
    CHECK(load_dataset(path.string()) == d);
    CHECK(check_fingerprint(load_dataset(path.string()), m));

    const auto empty = collect(m, BehaviorSchedule::fixed(Policy::uniform(3, 2, 3)), 0, 1);
    save_dataset(empty, scratch("empty.txt").string());
    CHECK(load_dataset(scratch("empty.txt").string()) == empty);

    // Keep the header and five records; the sixth record is missing.
    const std::string text = slurp(path);
    std::size_t cut = 0;
    for (int line = 0; line < 6; ++line) cut = text.find('\n', cut) + 1;
    std::ofstream(scratch("truncated.txt"), std::ios::binary) << text.substr(0, cut);
    try {
      load_dataset(scratch("truncated.txt").string());
      FAIL("truncated file loaded");
    } catch (const ParseError& e) {
      CHECK(e.line() == 7);
    }

    std::string bad = text;
    const std::size_t third = bad.find('\n', bad.find('\n', bad.find('\n') + 1) + 1) + 1;
    bad.replace(third, 1, "x");
    std::ofstream(scratch("corrupt.txt"), std::ios::binary) << bad;
    try {
      load_dataset(scratch("corrupt.txt").string());
      FAIL("corrupt file loaded");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
}
