#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cleval/nn.hpp"
#include "cleval/rng.hpp"
#include "cleval/streams.hpp"

namespace testing {

inline cleval::Matrix random_matrix(cleval::Rng& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  cleval::Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = n(rng);
    }
  }
  return m;
}

inline std::vector<double> random_vector(cleval::Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) {
    x = d(rng);
  }
  return v;
}

inline cleval::Batch random_batch(cleval::Rng& rng, int rows, int dims, int classes) {
  cleval::Batch b;
  b.inputs = random_matrix(rng, rows, dims);
  std::uniform_int_distribution<int> label(0, classes - 1);
  for (int r = 0; r < rows; ++r) {
    b.labels.push_back(label(rng));
  }
  return b;
}

/// A small synthetic stream that trains in milliseconds.
inline cleval::TaskStream tiny_stream(int n_tasks = 2, long iters = 20, int dims = 6,
                                      cleval::Scenario scenario = cleval::Scenario::class_incremental) {
  cleval::SyntheticSpec spec;
  spec.n_classes = 2 * n_tasks;
  spec.dims = dims;
  spec.per_class_train = 60;
  spec.per_class_eval = 50;
  spec.n_tasks = n_tasks;
  spec.iters_per_task = iters;
  return cleval::make_split_synthetic(spec, 11, scenario);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cleval_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
