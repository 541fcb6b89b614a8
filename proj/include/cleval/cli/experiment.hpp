#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cleval/cli/config.hpp"
#include "cleval/cli/csv.hpp"
#include "cleval/evaluator.hpp"

namespace cleval::cli {

struct SeedRun {
  std::uint64_t seed = 0;
  RunLog log;
};

struct ExperimentResult {
  std::string dir;
  std::vector<SeedRun> runs;
  std::vector<std::string> plots;

  /// First failing run, if any.
  std::optional<RunError> error() const;
  /// Mean final ACC over seeds (runs must all be complete).
  double mean_acc() const;
};

/// Resolves cfg.output_dir against `output_root` when the former is relative.
std::string resolve_output_dir(const RunConfig& cfg, const std::string& output_root);

/// Creates `dir` and checks that a file can be written there.
void ensure_writable_dir(const std::string& dir);

std::vector<EvalTraceRow> eval_trace_rows(const std::vector<SeedRun>& runs);
std::vector<MetricsRow> metrics_rows(const std::vector<SeedRun>& runs);
std::vector<ProbeCsvRow> probe_rows(const std::vector<SeedRun>& runs);
/// One row per seed (empty fields when the run did not finish) plus "mean"
/// and "sd" rows over the finished runs.
std::vector<FinalRow> final_rows(const std::vector<SeedRun>& runs, std::size_t n_windows);

/// Runs every seed of cfg and writes config.cfg, eval_trace.csv, metrics.csv,
/// probes.csv, final.csv and one SVG per evaluation task. Failed runs are
/// logged (partial CSVs are still written) and reported through error().
ExperimentResult run_experiment(const RunConfig& cfg, const std::string& output_root = "");

struct GridCell {
  std::vector<std::pair<std::string, std::string>> settings;
  RunConfig config;
  double score = 0.0;
  bool diverged = false;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
};

/// Cartesian product in file order, last key varying fastest. Each cell runs
/// all seeds in <output_dir>/cell_<i>; score is mean final ACC, 0 when a run
/// diverged. Writes grid_report.csv and best.cfg to the base output dir.
GridResult grid_search(const RunConfig& base, const Grid& grid, const std::string& output_root = "");

/// Cells of the product in deterministic order.
std::vector<std::vector<std::pair<std::string, std::string>>> grid_cells(const Grid& grid);

}  // namespace cleval::cli
