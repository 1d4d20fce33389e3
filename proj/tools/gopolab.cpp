// Command-line front end: gen, run, verify, plot, diversity.
// Exit status: 0 success, 1 invariant failure, 2 configuration error.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "gopolab/experiment.hpp"
#include "gopolab/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline actor-critic laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  auto* gen = app.add_subcommand("gen", "Write the MDP, class and datasets for a config");
  gen->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "Run every (algorithm, K, seed) cell");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  int workers = 0;
  run->add_option("--workers", workers, "Override the worker count");

  auto* verify = app.add_subcommand("verify", "Run the invariant suites");
  std::string level = "quick";
  verify->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  bool flip_sign = false;
  verify->add_flag("--mutate-sign-flip", flip_sign,
                   "Flip the Bellman-error sign in the decomposition check (must fail)");

  auto* plot = app.add_subcommand("plot", "Median suboptimality per K, slopes and an SVG plot");
  std::string results_path, plot_dir;
  plot->add_option("results", results_path, "results.csv from run")->required();
  plot->add_option("--out", plot_dir, "Output directory (default: next to the results)");

  auto* diversity = app.add_subcommand("diversity", "Coverage report of the comparator");
  diversity->add_option("config", config_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      const auto files = gopolab::cmd_gen(gopolab::load_config(config_path));
      std::cout << "wrote " << files.size() << " files\n";
    } else if (*run) {
      auto cfg = gopolab::load_config(config_path);
      if (workers > 0) cfg.workers = workers;
      const auto rows = gopolab::cmd_run(cfg);
      int failed = 0;
      for (const auto& r : rows) failed += !r.failure.empty();
      std::cout << "ran " << rows.size() << " cells (" << failed << " failed); results in "
                << gopolab::output_dir(cfg) << "/results.csv\n";
    } else if (*verify) {
      const auto report = gopolab::run_verify(
          level == "full" ? gopolab::VerifyLevel::kFull : gopolab::VerifyLevel::kQuick, flip_sign);
      std::cout << gopolab::format_report(report);
      return report.ok() ? kExitOk : kExitInvariant;
    } else if (*plot) {
      if (plot_dir.empty()) {
        const auto slash = results_path.find_last_of('/');
        plot_dir = slash == std::string::npos ? "." : results_path.substr(0, slash);
      }
      for (const auto& f : gopolab::cmd_plot(results_path, plot_dir)) {
        std::cout << f.algorithm << ": ";
        if (f.slope)
          std::printf("slope %.4f (se %.4f)", *f.slope, *f.stderr_slope);
        else
          std::cout << f.notice;
        std::cout << (f.nonincreasing ? ", medians nonincreasing\n" : ", medians not monotone\n");
      }
    } else if (*diversity) {
      std::cout << "wrote " << gopolab::cmd_diversity(gopolab::load_config(config_path)) << '\n';
    }
  } catch (const gopolab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gopolab::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitOk;
}
