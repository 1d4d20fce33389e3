#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gopolab {

struct CheckResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;      // largest residual, or smallest margin for margin checks
  std::string worst_kind;  // "residual" or "margin"
  double tolerance = 0.0;
  bool ok() const { return cases > 0 && failures == 0; }
};

// Error decomposition and induced-MDP fixed point on random instances with
// |S| <= 5, |A| <= 3, H <= 5. With flip_sign the Bellman-error term enters the
// decomposition with the wrong sign (mutation smoke test).
CheckResult check_error_decomposition_suite(int instances, std::uint64_t seed, bool flip_sign = false);
CheckResult check_fixed_point_suite(int instances, std::uint64_t seed);
CheckResult check_performance_difference_suite(int instances, std::uint64_t seed);
CheckResult check_bellman_consistency_suite(int instances, std::uint64_t seed);

// Chain DP versus enumeration on H in 2..3, N in 3..5.
CheckResult check_vsc_oracle_suite(int instances, std::uint64_t seed);
CheckResult check_roc_oracle_suite(int instances, std::uint64_t seed);
CheckResult check_psc_marginal_suite(int instances, std::uint64_t seed);

// data_diversity versus an explicit difference-class scan.
CheckResult check_chi_scan_suite(int instances, std::uint64_t seed);

// Decoupling margins with classes closed under the Bellman operator (nu = 0).
CheckResult check_decoupling_suite(int instances, std::uint64_t seed,
                                   const std::vector<double>& lambdas,
                                   const std::vector<double>& epsilons);

// GOPO runs with eta = default_eta; audited regret versus 4 H b sqrt(T ln|A|).
CheckResult check_regret_suite(int runs, std::uint64_t seed, int T, int num_actions);

// C(pi; 1/sqrt K) <= C(pi; 0) <= concentrability, C(pi; 0) <= max_h relative
// condition number, C_pacle <= C_pevi on random linear instances.
CheckResult check_containment_suite(int instances, std::uint64_t seed);

enum class VerifyLevel { kQuick, kFull };

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool ok() const;
};

VerifyReport run_verify(VerifyLevel level, bool flip_sign = false);
std::string format_report(const VerifyReport& report);

}  // namespace gopolab
