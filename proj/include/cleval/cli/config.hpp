#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cleval/evaluator.hpp"
#include "cleval/methods.hpp"
#include "cleval/streams.hpp"

namespace cleval::cli {

enum class DatasetKind { synthetic_split, mnist_split, permuted };

struct RunConfig {
  DatasetKind dataset = DatasetKind::synthetic_split;
  Scenario scenario = Scenario::class_incremental;
  int n_tasks = 5;
  long iters_per_task = 500;
  int batch_size = 256;
  std::vector<int> hidden{400, 400};

  MethodKind method = MethodKind::finetune;
  double lr = 0.01;
  double momentum = 0.0;
  double alpha = 0.5;
  std::size_t buffer_capacity = 1000;
  double gem_margin = 0.5;
  double lwf_temperature = 2.0;
  double ewc_lambda = 1.0;
  std::size_t fisher_samples = 1024;
  FisherMode fisher_mode = FisherMode::accumulate;

  long rho_eval = 1;
  std::optional<std::size_t> eval_subsample = 1000;  // nullopt means ALL
  bool eval_resample = true;
  EvalSource eval_source = EvalSource::eval_split;
  std::vector<int> window_sizes{10, 100};
  bool force_boundary_eval = true;
  MinAccRange minacc_range = MinAccRange::post_learned;

  std::vector<std::uint64_t> seeds{0};
  std::uint64_t data_seed = 0;
  std::string output_dir = "run";
  std::string mnist_dir;

  int synthetic_dims = 32;
  int synthetic_classes = 10;
  int synthetic_train_per_class = 1000;
  int synthetic_eval_per_class = 1000;
  double synthetic_radius = 3.5;
  double synthetic_shared_offset = 24.0;
};

struct ParsedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

/// Applies one `key = value` setting. Throws Error(config) on unknown keys,
/// malformed values or out-of-range values.
void set_key(RunConfig& cfg, std::string_view key, std::string_view value);

/// Checks cross-field constraints (task split, window sizes, ...).
void validate(const RunConfig& cfg);

/// Parses `key = value` lines; '#' starts a comment and lists are
/// comma-separated. Errors carry the offending line number.
ParsedConfig parse_config(std::string_view text);
ParsedConfig load_config(const std::string& path);

/// Serializes every key; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);

std::vector<std::string> config_keys();

std::string_view to_string(DatasetKind d);
std::string_view to_string(Scenario s);
std::string_view to_string(MethodKind m);

MethodConfig method_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
EvaluatorConfig evaluator_config(const RunConfig& cfg);

/// Builds the task stream for cfg (data drawn with cfg.data_seed).
TaskStream build_stream(const RunConfig& cfg);

/// Grid file: one `key = v1, v2, ...` line per axis.
using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;
Grid parse_grid(std::string_view text);

/// Splits on commas and trims whitespace.
std::vector<std::string> split_list(std::string_view value);

}  // namespace cleval::cli
