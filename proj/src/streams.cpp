#include "cleval/streams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "cleval/error.hpp"

namespace cleval {

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.n_classes = data.n_classes;
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), data.inputs.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = indices[i];
    if (src >= data.size()) {
      throw Error(ErrorCode::invalid_argument, "subset index out of range");
    }
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(src));
    out.labels.push_back(data.labels[src]);
  }
  return out;
}

int TaskStream::task_at(long t) const {
  if (t < 1 || t > total_iters()) {
    throw Error(ErrorCode::stream_end, "iteration " + std::to_string(t) +
                                           " outside stream [1, " +
                                           std::to_string(total_iters()) + "]");
  }
  const auto it = std::lower_bound(boundaries.begin(), boundaries.end(), t);
  return static_cast<int>(std::distance(boundaries.begin(), it)) + 1;
}

bool TaskStream::is_boundary(long t) const {
  return std::binary_search(boundaries.begin(), boundaries.end(), t);
}

void finalize(TaskStream& stream) {
  if (stream.tasks.empty()) {
    throw Error(ErrorCode::invalid_argument, "stream has no tasks");
  }
  stream.boundaries.clear();
  long acc = 0;
  for (std::size_t i = 0; i < stream.tasks.size(); ++i) {
    auto& task = stream.tasks[i];
    task.id = static_cast<int>(i) + 1;
    if (task.iters < 1) {
      throw Error(ErrorCode::invalid_argument, "task " + std::to_string(task.id) +
                                                   " has no iterations");
    }
    if (task.classes.empty() || task.train.size() == 0 || task.eval.size() == 0) {
      throw Error(ErrorCode::invalid_argument,
                  "task " + std::to_string(task.id) + " has no classes or empty data");
    }
    acc += task.iters;
    stream.boundaries.push_back(acc);
  }
  stream.input_dim = static_cast<int>(stream.tasks.front().train.inputs.cols());
  stream.n_classes = stream.tasks.front().train.n_classes;
}

namespace {

std::vector<std::size_t> indices_with_labels(const Dataset& data, const std::vector<int>& classes) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), data.labels[i]) != classes.end()) {
      idx.push_back(i);
    }
  }
  return idx;
}

}  // namespace

TaskStream make_split_stream(const Dataset& train, const Dataset& eval, int n_tasks,
                             long iters_per_task, Scenario scenario) {
  const int n_classes = train.n_classes;
  if (n_tasks < 1 || n_classes % n_tasks != 0) {
    throw Error(ErrorCode::invalid_argument, std::to_string(n_classes) +
                                                 " classes cannot be split evenly into " +
                                                 std::to_string(n_tasks) + " tasks");
  }
  if (train.inputs.cols() != eval.inputs.cols()) {
    throw Error(ErrorCode::dimension, "train and eval inputs differ in dimension");
  }
  const int per_task = n_classes / n_tasks;
  TaskStream stream;
  stream.scenario = scenario;
  for (int k = 0; k < n_tasks; ++k) {
    TaskSpec task;
    for (int c = k * per_task; c < (k + 1) * per_task; ++c) {
      task.classes.push_back(c);
    }
    task.train = subset(train, indices_with_labels(train, task.classes));
    task.eval = subset(eval, indices_with_labels(eval, task.classes));
    task.iters = iters_per_task;
    stream.tasks.push_back(std::move(task));
  }
  finalize(stream);
  return stream;
}

TaskStream make_split_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                Scenario scenario) {
  if (spec.n_classes < 1 || spec.dims < 1 || spec.per_class_train < 1 ||
      spec.per_class_eval < 1) {
    throw Error(ErrorCode::invalid_argument, "synthetic stream sizes must be positive");
  }
  if (spec.n_tasks < 1 || spec.n_classes % spec.n_tasks != 0) {
    throw Error(ErrorCode::invalid_argument, std::to_string(spec.n_classes) +
                                                 " classes cannot be split evenly into " +
                                                 std::to_string(spec.n_tasks) + " tasks");
  }
  Rng mean_rng = make_rng(seed, "synthetic-means");
  Rng sample_rng = make_rng(seed, "synthetic-samples");
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix means(spec.n_classes, spec.dims);
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int d = 0; d < spec.dims; ++d) {
      means(c, d) = normal(mean_rng);
    }
    means.row(c) *= spec.radius / means.row(c).norm();
  }
  if (spec.shared_offset != 0.0) {
    Eigen::RowVectorXd shared(spec.dims);
    for (int d = 0; d < spec.dims; ++d) {
      shared(d) = normal(mean_rng);
    }
    shared *= spec.shared_offset / shared.norm();
    means.rowwise() += shared;
  }

  Dataset train;
  Dataset eval;
  train.n_classes = eval.n_classes = spec.n_classes;
  train.inputs.resize(static_cast<Eigen::Index>(spec.n_classes) * spec.per_class_train, spec.dims);
  eval.inputs.resize(static_cast<Eigen::Index>(spec.n_classes) * spec.per_class_eval, spec.dims);
  Eigen::Index tr = 0;
  Eigen::Index ev = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    // Draw train and eval from one pool so the split is a disjoint index split.
    const int pool = spec.per_class_train + spec.per_class_eval;
    for (int i = 0; i < pool; ++i) {
      auto row = (i < spec.per_class_train) ? train.inputs.row(tr++) : eval.inputs.row(ev++);
      for (int d = 0; d < spec.dims; ++d) {
        row(d) = means(c, d) + normal(sample_rng);
      }
      (i < spec.per_class_train ? train.labels : eval.labels).push_back(c);
    }
  }
  return make_split_stream(train, eval, spec.n_tasks, spec.iters_per_task, scenario);
}

std::vector<std::size_t> task_permutation(std::size_t dims, int task_id, std::uint64_t seed) {
  std::vector<std::size_t> perm(dims);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (task_id > 1) {
    Rng rng = make_rng(seed, "permutation", static_cast<std::uint64_t>(task_id));
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  return perm;
}

namespace {

Dataset permute_inputs(const Dataset& data, const std::vector<std::size_t>& perm) {
  Dataset out;
  out.n_classes = data.n_classes;
  out.labels = data.labels;
  out.inputs.resize(data.inputs.rows(), data.inputs.cols());
  for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) {
    out.inputs.col(j) = data.inputs.col(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(j)]));
  }
  return out;
}

}  // namespace

TaskStream make_permuted_stream(const Dataset& train, const Dataset& eval, int n_tasks,
                                long iters_per_task, std::uint64_t seed) {
  if (n_tasks < 1) {
    throw Error(ErrorCode::invalid_argument, "need at least one task");
  }
  if (train.inputs.cols() != eval.inputs.cols() || train.size() == 0 || eval.size() == 0) {
    throw Error(ErrorCode::dimension, "invalid base dataset for permuted stream");
  }
  TaskStream stream;
  stream.scenario = Scenario::domain_incremental;
  std::vector<int> all_classes(static_cast<std::size_t>(train.n_classes));
  std::iota(all_classes.begin(), all_classes.end(), 0);
  for (int k = 1; k <= n_tasks; ++k) {
    const auto perm = task_permutation(static_cast<std::size_t>(train.inputs.cols()), k, seed);
    TaskSpec task;
    task.train = (k == 1) ? train : permute_inputs(train, perm);
    task.eval = (k == 1) ? eval : permute_inputs(eval, perm);
    task.classes = all_classes;
    task.iters = iters_per_task;
    stream.tasks.push_back(std::move(task));
  }
  finalize(stream);
  return stream;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw Error(ErrorCode::parse, path.string() + ": truncated header at offset " +
                                      std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x at offset 0 (expected 0x%08x)", got, want);
    throw Error(ErrorCode::parse, path.string() + ": " + buf);
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  expect_magic(read_be32(img, 0, images_path), 0x00000803u, images_path);
  expect_magic(read_be32(lab, 0, labels_path), 0x00000801u, labels_path);
  const std::size_t n_images = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n_images != n_labels) {
    throw Error(ErrorCode::parse, "image count " + std::to_string(n_images) +
                                      " does not match label count " +
                                      std::to_string(n_labels));
  }
  const std::size_t pixels = rows * cols;
  constexpr std::size_t img_header = 16;
  constexpr std::size_t lab_header = 8;
  if (img.size() < img_header + n_images * pixels) {
    throw Error(ErrorCode::parse, images_path.string() + ": truncated pixel data at offset " +
                                      std::to_string(img.size()));
  }
  if (lab.size() < lab_header + n_labels) {
    throw Error(ErrorCode::parse, labels_path.string() + ": truncated label data at offset " +
                                      std::to_string(lab.size()));
  }

  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(n_images), static_cast<Eigen::Index>(pixels));
  out.labels.resize(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          img[img_header + i * pixels + p] / 255.0;
    }
    out.labels[i] = lab[lab_header + i];
  }
  out.n_classes = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t split_size,
                                           const EvalSubsampleConfig& cfg, Rng& rng) {
  std::vector<std::size_t> idx(split_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (!cfg.sample_size) {
    return idx;
  }
  const std::size_t k = *cfg.sample_size;
  if (k == 0 || k > split_size) {
    throw Error(ErrorCode::invalid_argument, "sample size " + std::to_string(k) +
                                                 " invalid for split of size " +
                                                 std::to_string(split_size));
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, split_size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

EvalSampler::EvalSampler(const TaskSpec& task, EvalSubsampleConfig cfg, std::uint64_t seed)
    : source_(cfg.source == EvalSource::train_split ? &task.train : &task.eval),
      cfg_(cfg),
      rng_(make_rng(seed, "eval-subsample", static_cast<std::uint64_t>(task.id))) {
  if (cfg_.sample_size && *cfg_.sample_size > source_->size()) {
    throw Error(ErrorCode::invalid_argument,
                "eval sample size " + std::to_string(*cfg_.sample_size) +
                    " exceeds split size " + std::to_string(source_->size()) + " of task " +
                    std::to_string(task.id));
  }
}

const std::vector<std::size_t>& EvalSampler::next() {
  if (!drawn_ || cfg_.resample_each_eval) {
    current_ = subsample_indices(source_->size(), cfg_, rng_);
    drawn_ = true;
  }
  return current_;
}

Dataset subsample_eval(const TaskSpec& task, const EvalSubsampleConfig& cfg, Rng& rng) {
  const Dataset& src = cfg.source == EvalSource::train_split ? task.train : task.eval;
  return subset(src, subsample_indices(src.size(), cfg, rng));
}

StreamBatch next_batch(const TaskStream& stream, long t, int batch_size, Rng& rng) {
  if (batch_size < 1) {
    throw Error(ErrorCode::invalid_argument, "batch size must be positive");
  }
  const int k = stream.task_at(t);
  const Dataset& train = stream.tasks[static_cast<std::size_t>(k - 1)].train;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) {
    i = pick(rng);
  }
  Dataset d = subset(train, idx);
  return {Batch{std::move(d.inputs), std::move(d.labels)}, k};
}

}  // namespace cleval
