#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

#include "gopolab/experiment.hpp"

using namespace gopolab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(GOPOLAB_BINARY_DIR) / "unit_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json small_config(const fs::path& out) {
  auto j = nlohmann::json::parse(R"({
    "schema": 1,
    "mdp": {"generator": "random", "states": 3, "actions": 2, "horizon": 3, "b": 1.0, "seed": 5},
    "class": {"kind": "policy_values", "probes": 4, "seed": 2},
    "behavior": {"kind": "uniform"},
    "comparator": {"kind": "optimal"},
    "K": [8, 16],
    "seeds": [1, 2],
    "algorithms": [
      {"critic": "vsc", "params": "theorem-default"},
      {"critic": "psc", "params": "explicit", "lambda": 1.0, "gamma": 0.05, "T": 10}
    ],
    "workers": 2
  })");
  j["output"] = out.string();
  return j;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(GOPOLAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string synthetic_results(const std::string& algorithm, double (*curve)(int)) {
  std::string text = results_header() + "\n";
  for (int K : {64, 128, 256, 512, 1024})
    for (int seed = 1; seed <= 3; ++seed) {
      CellResult r;
      r.algorithm = algorithm;
      r.K = K;
      r.seed = seed;
      r.suboptimality = curve(K);
      text += results_row(r) + "\n";
    }
  return text;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config errors name the field") {
    const auto good = small_config("x");
    CHECK_NOTHROW(parse_config(good));
    auto check_field = [&](nlohmann::json j, const std::string& field) {
      try {
        parse_config(j);
        FAIL("accepted a bad config");
      } catch (const ConfigError& e) {
        CHECK(e.field() == field);
        CHECK(std::string(e.what()).find(field) != std::string::npos);
      }
    };
    auto j = good;
    j["K"] = {16, 8};
    check_field(j, "K");
    j = good;
    j["seeds"] = nlohmann::json::array();
    check_field(j, "seeds");
    j = good;
    j["schema"] = 99;
    check_field(j, "schema");
    j = good;
    j["workers"] = 0;
    check_field(j, "workers");
    j = good;
    j["mdp"]["generator"] = "maze";
    CHECK_THROWS_AS(build_instance(parse_config(j)), ConfigError);
  }

  TEST_CASE("output root from the environment") {
    auto cfg = parse_config(small_config("relative_out"));
    cfg.output = "relative_out";
    ::setenv("GOPOLAB_OUTPUT_ROOT", "/tmp/gopolab_root", 1);
    CHECK(fs::path(output_dir(cfg)) == fs::path("/tmp/gopolab_root/relative_out"));
    ::unsetenv("GOPOLAB_OUTPUT_ROOT");
    CHECK(fs::path(output_dir(cfg)) == fs::path("relative_out"));
  }

  TEST_CASE("gen, run and rerun") {
    const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    const auto cfg_a = parse_config(small_config(a)), cfg_b = parse_config(small_config(b));
    cmd_gen(cfg_a);
    cmd_gen(cfg_b);
    int datasets = 0;
    for (const auto& e : fs::directory_iterator(a / "data")) {
      ++datasets;
      CHECK(slurp(e.path()) == slurp(b / "data" / e.path().filename()));
    }
    CHECK(datasets == 4);
    CHECK(slurp(a / "mdp.json") == slurp(b / "mdp.json"));
    CHECK(slurp(a / "class.json") == slurp(b / "class.json"));

    const auto cells = cmd_run(cfg_a);
    cmd_run(cfg_b);
    CHECK(cells.size() == 2u * 2u * 2u);
    for (const auto& c : cells) {
      CHECK(c.failure.empty());
      CHECK(std::abs(c.suboptimality) <= 2.0);
    }
    const std::string results = slurp(a / "results.csv");
    CHECK(results == slurp(b / "results.csv"));
    CHECK(std::count(results.begin(), results.end(), '\n') == 1 + 8);
    CHECK(fs::exists(a / "timings.csv"));
  }

  TEST_CASE("slope fits") {
    const auto fit = fit_loglog({64, 128, 256, 512}, {1 / 8.0, 1 / std::sqrt(128.0), 1 / 16.0, 1 / std::sqrt(512.0)});
    CHECK(std::abs(fit.first + 0.5) < 1e-6);
    CHECK(fit.second < 1e-6);

    const auto half = summarize_results(synthetic_results("roc", [](int K) { return 1.0 / std::sqrt(K); }));
    REQUIRE(half.size() == 1);
    REQUIRE(half[0].slope.has_value());
    CHECK(std::abs(*half[0].slope + 0.5) < 1e-6);
    CHECK(half[0].nonincreasing);

    const auto flat = summarize_results(synthetic_results("vsc", [](int) { return 0.3; }));
    CHECK(std::abs(*flat[0].slope) < 1e-12);

    std::string two = results_header() + "\n";
    for (int K : {8, 16}) {
      CellResult r;
      r.algorithm = "psc";
      r.K = K;
      r.suboptimality = 0.1;
      two += results_row(r) + "\n";
    }
    const auto short_fit = summarize_results(two);
    CHECK_FALSE(short_fit[0].slope.has_value());
    CHECK_FALSE(short_fit[0].notice.empty());

    std::string future = synthetic_results("roc", [](int K) { return 1.0 / K; });
    future.replace(future.find("\n1,") + 1, 1, "7");
    CHECK_THROWS(summarize_results(future));
  }

  TEST_CASE("plot writes the slope table") {
    const auto dir = fresh_dir("plot");
    std::ofstream(dir / "results.csv") << synthetic_results("roc", [](int K) { return 2.0 / std::sqrt(K); });
    cmd_plot((dir / "results.csv").string(), dir.string());
    CHECK(fs::exists(dir / "slopes.csv"));
    CHECK(fs::exists(dir / "suboptimality.svg"));
    CHECK(slurp(dir / "slopes.csv").find("roc") != std::string::npos);
  }

  TEST_CASE("exit codes") {
    const auto dir = fresh_dir("exit");
    std::ofstream(dir / "bad.json") << R"({"schema": 1, "K": "many"})";
    CHECK(cli("gen " + (dir / "bad.json").string()) == 2);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(cli("run " + (dir / "broken.json").string()) == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("verify --level quick") == 0);
    CHECK(cli("verify --level quick --mutate-sign-flip") == 1);

    std::ofstream(dir / "good.json") << small_config(dir / "out").dump();
    CHECK(cli("gen " + (dir / "good.json").string()) == 0);
    CHECK(cli("run " + (dir / "good.json").string()) == 0);
    CHECK(cli("diversity " + (dir / "good.json").string()) == 0);
    CHECK(fs::exists(dir / "out" / "diversity.csv"));
    CHECK(cli("plot " + (dir / "out" / "results.csv").string()) == 0);
  }
}
