#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cleval/cli/csv.hpp"

namespace cleval::cli {

/// Seed-aggregated accuracy curve of one evaluation task.
struct CurveSeries {
  int eval_task = 1;
  std::vector<long> t;
  std::vector<double> mean;
  std::vector<double> sd;  // population SD over seeds
  std::size_t n_seeds = 0;
  std::optional<double> min_acc;  // seed mean of the minimum after the task is learned
  std::vector<long> boundaries;   // last iteration of every task but the final one
};

std::vector<CurveSeries> build_curves(const std::vector<EvalTraceRow>& trace,
                                      const std::vector<MetricsRow>& metrics);

std::string render_svg(const CurveSeries& curve);

/// Reads eval_trace.csv and metrics.csv from run_dir and writes
/// accuracy_task<i>.svg next to them. Returns the written paths.
std::vector<std::string> plot_curves(const std::string& run_dir);

}  // namespace cleval::cli
