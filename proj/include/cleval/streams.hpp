#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cleval/nn.hpp"
#include "cleval/rng.hpp"

namespace cleval {

enum class Scenario { class_incremental, domain_incremental, task_incremental };

struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
};

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

struct TaskSpec {
  int id = 1;  // 1-based
  Dataset train;
  Dataset eval;
  std::vector<int> classes;
  long iters = 0;
};

/// Ordered locally stationary tasks. `boundaries[k - 1]` is |T_k|, the last
/// (1-based) iteration of task k.
struct TaskStream {
  std::vector<TaskSpec> tasks;
  Scenario scenario = Scenario::class_incremental;
  std::vector<long> boundaries;
  int input_dim = 0;
  int n_classes = 0;

  long total_iters() const { return boundaries.empty() ? 0 : boundaries.back(); }
  int n_tasks() const { return static_cast<int>(tasks.size()); }
  /// The task k with boundaries[k-2] < t <= boundaries[k-1].
  int task_at(long t) const;
  bool is_boundary(long t) const;
};

/// Recomputes boundaries from task iteration counts and checks the stream.
void finalize(TaskStream& stream);

/// Splits a labelled train/eval pair into tasks over sequential class groups
/// ({0,1}, {2,3}, ... for 10 classes and 5 tasks).
TaskStream make_split_stream(const Dataset& train, const Dataset& eval, int n_tasks,
                             long iters_per_task,
                             Scenario scenario = Scenario::class_incremental);

struct SyntheticSpec {
  int n_classes = 10;
  int dims = 32;
  int per_class_train = 1000;
  int per_class_eval = 1000;
  int n_tasks = 5;
  long iters_per_task = 500;
  double radius = 3.5;
  double shared_offset = 24.0;  // norm of a mean component common to all classes
};

/// Isotropic unit-variance Gaussian clusters whose class-specific mean parts lie
/// on a sphere of `radius`, all shifted by one shared offset vector; classes are
/// grouped sequentially into tasks.
TaskStream make_split_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                Scenario scenario = Scenario::class_incremental);

/// Input-index permutation of task k (1-based); task 1 is the identity.
std::vector<std::size_t> task_permutation(std::size_t dims, int task_id, std::uint64_t seed);

/// Domain-incremental stream: each task applies its own fixed permutation to the
/// inputs of the full base train/eval sets. Labels and output space unchanged.
TaskStream make_permuted_stream(const Dataset& train, const Dataset& eval, int n_tasks,
                                long iters_per_task, std::uint64_t seed);

/// Reads an IDX image/label pair (magics 0x00000803 / 0x00000801, big-endian
/// sizes). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

enum class EvalSource { eval_split, train_split };

struct EvalSubsampleConfig {
  std::optional<std::size_t> sample_size = 1000;  // nullopt means ALL
  bool resample_each_eval = true;
  EvalSource source = EvalSource::eval_split;
};

/// Uniform draw without replacement of cfg.sample_size indices out of
/// [0, split_size). ALL returns 0..split_size-1 in order.
std::vector<std::size_t> subsample_indices(std::size_t split_size,
                                           const EvalSubsampleConfig& cfg, Rng& rng);

/// Per-evaluation-task sampler owning its own RNG stream. With
/// resample_each_eval=false the first draw is reused forever.
class EvalSampler {
 public:
  EvalSampler(const TaskSpec& task, EvalSubsampleConfig cfg, std::uint64_t seed);

  const Dataset& source() const { return *source_; }
  /// Indices into source() for the next evaluation.
  const std::vector<std::size_t>& next();

 private:
  const Dataset* source_;
  EvalSubsampleConfig cfg_;
  Rng rng_;
  std::vector<std::size_t> current_;
  bool drawn_ = false;
};

/// Labelled sample set for one evaluation; a thin wrapper over EvalSampler.
Dataset subsample_eval(const TaskSpec& task, const EvalSubsampleConfig& cfg, Rng& rng);

struct StreamBatch {
  Batch batch;
  int task = 1;
};

/// Uniform with-replacement batch from the train set of the task active at t.
StreamBatch next_batch(const TaskStream& stream, long t, int batch_size, Rng& rng);

}  // namespace cleval
