#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cleval/metrics.hpp"
#include "cleval/nn.hpp"
#include "cleval/rng.hpp"

namespace cleval::oracle {

/// Forward pass with explicit scalar loops over the flat parameter layout.
Matrix naive_forward(const ModelState& model, const Matrix& inputs);

/// Fourth-order central differences
///   (8 (f(x + h) - f(x - h)) - (f(x + 2h) - f(x - 2h))) / 12h
/// along each listed coordinate.
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, std::span<const std::size_t> coords,
                                        double h);

/// Smallest |pre-activation| of any ReLU unit for one input row.
double min_abs_preactivation(const ModelState& model, std::span<const double> input);

/// Standard-normal input rows, redrawn until every ReLU pre-activation is at
/// least `margin` away from zero so finite differences stay on one linear piece.
Matrix kink_free_inputs(const ModelState& model, Rng& rng, int rows, double margin);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-12);

/// Minimum over {t : t > start} of a (t, accuracy) trace; empty if none.
std::optional<double> min_after(std::span<const std::pair<long, double>> trace, long start);

/// Projection of g onto {z : <z, g_n> >= 0} by enumerating all active sets and
/// keeping the closest feasible KKT point. Exponential in the number of
/// constraints; intended for small problems.
std::optional<Gradient> gem_enumerate(const Gradient& g, std::span<const Gradient> task_grads,
                                      double tol = 1e-12);

struct SuiteResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  bool passed() const { return max_error <= tolerance; }
};

/// Streaming WF^w / WP^w / min-ACC against brute force on random traces.
SuiteResult check_metrics(std::uint64_t seed, std::size_t n_traces);
/// CE, distillation (T = 2) and EWC penalty gradients against central differences.
SuiteResult check_gradients(std::uint64_t seed, std::size_t n_coords);
/// GEM dual solver against active-set enumeration (margin 0).
SuiteResult check_gem(std::uint64_t seed, std::size_t n_problems);

}  // namespace cleval::oracle
