#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gopolab/function_class.hpp"
#include "gopolab/gopo.hpp"
#include "gopolab/mdp.hpp"
#include "gopolab/offline_data.hpp"

namespace gopolab {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kResultsSchemaVersion = 1;

// Malformed experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class ParamMode { kExplicit, kTheoremDefault, kTuned };

struct AlgorithmSpec {
  std::string label;
  CriticKind critic = CriticKind::kRoc;
  ParamMode mode = ParamMode::kTheoremDefault;
  double multiplier = 1.0;  // scales beta / lambda in theorem-default mode
  // Explicit values; in theorem-default mode any value given here overrides the formula.
  std::optional<double> beta, lambda, gamma, eta;
  std::optional<int> T;
};

struct ExperimentConfig {
  nlohmann::json mdp;
  nlohmann::json function_class;
  nlohmann::json behavior;
  nlohmann::json comparator;
  std::vector<int> K;
  std::vector<std::uint64_t> seeds;
  std::vector<AlgorithmSpec> algorithms;
  double assumed_diversity = 1.0;  // C in the lambda formulas
  int xi_probes = 16;              // probes for the realizability estimate
  std::uint64_t tuning_seed = 1000003;
  int workers = 1;
  std::string output = "out";
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
// The output directory, placed under $GOPOLAB_OUTPUT_ROOT when that is set and
// the configured path is relative.
std::string output_dir(const ExperimentConfig& cfg);

struct Instance {
  EpisodicMdp mdp;
  FunctionClass cls;
  BehaviorSchedule schedule;
};
Instance build_instance(const ExperimentConfig& cfg);

std::uint64_t dataset_seed(std::uint64_t seed, int K);

struct ResolvedParams {
  int T = 1;
  double eta = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double d_tilde = 0.0;
  double xi_max = 0.0;
  std::string mode;
};

// Parameters for one (algorithm, K) cell. Theorem-default mode uses eps = delta
// = 1/K, T = ceil(K ln|A|) and the formulas with unit constants.
ResolvedParams resolve_parameters(const AlgorithmSpec& spec, const Instance& inst, int K,
                                  double xi_max, double assumed_diversity,
                                  std::optional<double> multiplier = std::nullopt);

struct Comparator {
  Policy policy;
  std::string label;
};
Comparator resolve_comparator(const ExperimentConfig& cfg, const Instance& inst,
                              const StageSequence& d_mu, int K);

struct CellResult {
  std::string algorithm;
  int K = 0;
  std::uint64_t seed = 0;
  double suboptimality = 0.0;
  ResolvedParams params;
  std::string comparator;
  double comparator_value = 0.0;
  double diversity = 0.0;  // C(comparator; 1/sqrt(K))
  std::string failure;
  double wall_ms = 0.0;  // kept out of the results table
};

CellResult run_cell(const ExperimentConfig& cfg, const Instance& inst, const OfflineDataset& data,
                    const AlgorithmSpec& spec, const ResolvedParams& params, std::uint64_t seed);

std::string results_header();
std::string results_row(const CellResult& r);

// Writes mdp.json, class.json and one dataset per (K, seed) under the output directory.
std::vector<std::string> cmd_gen(const ExperimentConfig& cfg);

// Runs every (algorithm, K, seed) cell on the generated files and writes
// results.csv plus timings.csv. Returns the cells in row order.
std::vector<CellResult> cmd_run(const ExperimentConfig& cfg);

struct SlopeFit {
  std::string algorithm;
  std::vector<int> K;
  std::vector<double> median;
  bool nonincreasing = false;
  std::optional<double> slope;
  std::optional<double> stderr_slope;
  std::string notice;
};

// Least-squares fit of log y on log x with the standard error of the slope.
std::pair<double, double> fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// Median suboptimality per K and log-log slope per algorithm. Rejects results
// whose schema version is unknown.
std::vector<SlopeFit> summarize_results(const std::string& results_csv_text);
// Writes slopes.csv and suboptimality.svg next to the results file.
std::vector<SlopeFit> cmd_plot(const std::string& results_path, const std::string& out_dir);

// diversity.csv: comparator versus realized behavior for every (K, seed).
std::string cmd_diversity(const ExperimentConfig& cfg);

}  // namespace gopolab
