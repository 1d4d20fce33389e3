#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gopolab {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Raised when a caller breaks a documented precondition (shape mismatch,
// out-of-range parameter, invalid distribution).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised by file readers; carries the 1-based line number of the first bad line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// Dense (state, action) table, row-major in the state index.
struct StageTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;

  StageTable() = default;
  StageTable(int s, int a, double fill = 0.0)
      : num_states(s), num_actions(a), values(static_cast<std::size_t>(s) * a, fill) {}

  double& operator()(int s, int a) { return values[static_cast<std::size_t>(s) * num_actions + a]; }
  double operator()(int s, int a) const {
    return values[static_cast<std::size_t>(s) * num_actions + a];
  }
  std::size_t size() const { return values.size(); }
  bool same_shape(const StageTable& o) const {
    return num_states == o.num_states && num_actions == o.num_actions;
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  bool operator==(const StageTable&) const = default;
};

// One table per step h = 0..H-1. Step H (one past the end) is the zero table by convention.
using StageSequence = std::vector<StageTable>;

StageTable operator-(const StageTable& a, const StageTable& b);
StageTable operator+(const StageTable& a, const StageTable& b);

double log_sum_exp(const std::vector<double>& xs);

// SplitMix64 finalizer; used to derive independent streams from (seed, counters).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ (a * 0x9e3779b97f4a7c15ULL)) ^ (b + 0x632be59bd9b4e019ULL));
}

// Small counter-based generator. Output depends only on the key and the draw
// index, so results are reproducible across platforms and standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }
  // Inverse-CDF draw from a probability vector.
  int categorical(const double* p, int n);
  int categorical(const std::vector<double>& p) {
    return categorical(p.data(), static_cast<int>(p.size()));
  }
  double normal();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::string format_double(double v);  // %.17g, "inf"/"-inf" for infinities

}  // namespace gopolab
