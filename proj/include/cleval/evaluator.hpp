#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cleval/error.hpp"
#include "cleval/methods.hpp"
#include "cleval/metrics.hpp"
#include "cleval/nn.hpp"
#include "cleval/streams.hpp"

namespace cleval {

struct TrainConfig {
  std::vector<int> hidden{400, 400};
  double lr = 0.01;
  double momentum = 0.0;
  int batch_size = 256;
};

struct EvaluatorConfig {
  long rho_eval = 1;
  EvalSubsampleConfig subsample;
  std::vector<int> window_sizes{10, 100};
  bool force_boundary_eval = true;
  MinAccRange min_acc_range = MinAccRange::post_learned;
};

void validate(const EvaluatorConfig& cfg);

struct ProbeRow {
  long t = 0;
  StepProbe probe;
};

/// Task-based metrics taken from the boundary snapshot on full evaluation sets.
struct BoundarySummary {
  int task = 1;
  long t = 0;
  std::vector<double> fresh;  // A(E_i, f_t) for i = 1..task
  double acc = 0.0;
  std::optional<double> forg;
  std::optional<double> min_acc;
  double wc_acc = 0.0;
  std::vector<double> wf;  // per window size
  std::vector<double> wp;
};

struct RunError {
  ErrorCode code = ErrorCode::invalid_argument;
  std::string message;
  long t = 0;  // iteration being processed, 0 before training
};

struct RunLog {
  std::vector<EvalRecord> eval_records;
  std::vector<MetricReport> metric_reports;
  std::vector<ProbeRow> probe_rows;
  std::vector<BoundarySummary> boundary_summaries;
  std::vector<int> window_sizes;
  std::optional<RunError> error;  // set when the run aborted; the log is partial

  bool ok() const { return !error.has_value(); }
};

/// Fraction of argmax-correct predictions. With `mask` non-empty only those
/// output classes compete (task-incremental evaluation). Ties go to the lowest
/// class index.
double accuracy(const ModelState& model, const Matrix& inputs, std::span<const int> labels,
                std::span<const int> mask = {});

/// Accuracies of one immutable snapshot on tasks[0..k) at the given sample
/// indices (empty index list means the whole evaluation source).
std::vector<EvalRecord> evaluate_snapshot(const ModelState& snapshot, long t,
                                          std::span<const TaskSpec> tasks,
                                          std::span<const Dataset* const> sources,
                                          std::span<const std::vector<std::size_t>> indices,
                                          Scenario scenario);

/// Trains `method` over the whole stream, evaluating every rho_eval iterations
/// and at every boundary. Module errors end the run and are reported in
/// RunLog::error with everything logged so far.
RunLog run(const TaskStream& stream, const MethodConfig& method, const TrainConfig& train,
           const EvaluatorConfig& eval, std::uint64_t seed);

/// Evaluation rounds spent on task k relative to boundary-only evaluation.
double eval_overhead_ratio(const TaskStream& stream, int k, long rho_eval);

}  // namespace cleval
