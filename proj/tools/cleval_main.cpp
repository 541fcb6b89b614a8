#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cleval/cli/config.hpp"
#include "cleval/cli/csv.hpp"
#include "cleval/cli/experiment.hpp"
#include "cleval/cli/plot.hpp"
#include "cleval/error.hpp"
#include "cleval/oracles.hpp"

using nlohmann::json;
namespace cc = cleval::cli;

namespace {

int report_error(const std::string& code, const std::string& message, long t = -1) {
  json j{{"status", "error"}, {"error", code}, {"message", message}};
  if (t >= 0) {
    j["t"] = t;
  }
  std::cerr << j.dump() << std::endl;
  return 2;
}

std::string output_root() {
  const char* root = std::getenv("CLEVAL_OUTPUT_ROOT");
  return root ? root : "";
}

void print_warnings(const cc::ParsedConfig& parsed) {
  for (const auto& w : parsed.warnings) {
    std::cerr << json{{"status", "warning"}, {"message", w}}.dump() << std::endl;
  }
}

int cmd_run(const std::string& config_path) {
  const auto parsed = cc::load_config(config_path);
  print_warnings(parsed);
  const auto result = cc::run_experiment(parsed.config, output_root());
  if (const auto err = result.error()) {
    return report_error(std::string(cleval::to_string(err->code)), err->message, err->t);
  }
  json out{{"status", "ok"}, {"dir", result.dir}, {"seeds", result.runs.size()}, {"acc_mean", result.mean_acc()}};
  std::cout << out.dump() << std::endl;
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& grid_path) {
  const auto parsed = cc::load_config(config_path);
  print_warnings(parsed);
  const auto grid = cc::parse_grid(cc::read_text(grid_path));
  const auto result = cc::grid_search(parsed.config, grid, output_root());
  json best = json::object();
  for (const auto& [k, v] : result.cells[result.best].settings) {
    best[k] = v;
  }
  json out{{"status", "ok"},
           {"cells", result.cells.size()},
           {"best_cell", result.best},
           {"best_score", result.cells[result.best].score},
           {"best", best}};
  std::cout << out.dump() << std::endl;
  return 0;
}

int cmd_plot(const std::string& run_dir) {
  const auto files = cc::plot_curves(run_dir);
  std::cout << json{{"status", "ok"}, {"files", files}}.dump() << std::endl;
  return 0;
}

int cmd_oracle(std::uint64_t seed) {
  const cleval::oracle::SuiteResult suites[] = {
      cleval::oracle::check_metrics(seed, 1000),
      cleval::oracle::check_gradients(seed, 100),
      cleval::oracle::check_gem(seed, 100),
  };
  bool ok = true;
  for (const auto& s : suites) {
    std::cout << json{{"suite", s.name},
                      {"cases", s.cases},
                      {"max_error", s.max_error},
                      {"tolerance", s.tolerance},
                      {"passed", s.passed()}}
                     .dump()
              << std::endl;
    ok = ok && s.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual evaluation of continual learners"};
  app.require_subcommand(1);

  std::string config_path;
  std::string grid_path;
  std::string run_dir;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Train and continually evaluate every configured seed");
  run->add_option("config", config_path, "Config file (key = value lines)")->required();
  auto* grid = app.add_subcommand("grid", "Grid search over config values, scored by mean final ACC");
  grid->add_option("config", config_path, "Base config file")->required();
  grid->add_option("grid", grid_path, "Grid file (key = v1, v2, ... lines)")->required();
  auto* plot = app.add_subcommand("plot", "Render accuracy curves from a run directory");
  plot->add_option("run_dir", run_dir, "Directory with eval_trace.csv and metrics.csv")->required();
  auto* oracle = app.add_subcommand("oracle-check", "Compare metrics, gradients and GEM against oracles");
  oracle->add_option("--seed", seed, "Random seed for the generated cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    if (*run) {
      return cmd_run(config_path);
    }
    if (*grid) {
      return cmd_grid(config_path, grid_path);
    }
    if (*plot) {
      return cmd_plot(run_dir);
    }
    return cmd_oracle(seed);
  } catch (const cleval::Error& e) {
    return report_error(std::string(cleval::to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
}
