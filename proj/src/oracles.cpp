#include "cleval/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cleval/error.hpp"
#include "cleval/methods.hpp"
#include "cleval/rng.hpp"

namespace cleval::oracle {

Matrix naive_forward(const ModelState& model, const Matrix& inputs) {
  validate(model);
  Matrix a = inputs;
  std::size_t offset = 0;
  for (const auto& s : model.shapes) {
    if (a.cols() != s.in_dim) {
      throw Error(ErrorCode::dimension, "input dimension mismatch");
    }
    const std::size_t bias = offset + static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim);
    Matrix z(a.rows(), s.out_dim);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (int j = 0; j < s.out_dim; ++j) {
        double acc = model.params[bias + static_cast<std::size_t>(j)];
        for (int i = 0; i < s.in_dim; ++i) {
          acc += a(r, i) * model.params[offset + static_cast<std::size_t>(i) * s.out_dim + j];
        }
        z(r, j) = (s.activation == Activation::relu && acc < 0.0) ? 0.0 : acc;
      }
    }
    a = std::move(z);
    offset = bias + static_cast<std::size_t>(s.out_dim);
  }
  return a;
}

std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, std::span<const std::size_t> coords,
                                        double h) {
  std::vector<double> out;
  out.reserve(coords.size());
  auto at = [&](std::size_t c, double v) {
    x[c] = v;
    return f(x);
  };
  for (std::size_t c : coords) {
    const double orig = x.at(c);
    const double d1 = at(c, orig + h) - at(c, orig - h);
    const double d2 = at(c, orig + 2.0 * h) - at(c, orig - 2.0 * h);
    x[c] = orig;
    out.push_back((8.0 * d1 - d2) / (12.0 * h));
  }
  return out;
}

double min_abs_preactivation(const ModelState& model, std::span<const double> input) {
  validate(model);
  std::vector<double> a(input.begin(), input.end());
  std::size_t offset = 0;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& s : model.shapes) {
    const std::size_t bias = offset + static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim);
    std::vector<double> z(static_cast<std::size_t>(s.out_dim));
    for (int j = 0; j < s.out_dim; ++j) {
      double acc = model.params[bias + static_cast<std::size_t>(j)];
      for (int i = 0; i < s.in_dim; ++i) {
        acc += a[static_cast<std::size_t>(i)] * model.params[offset + static_cast<std::size_t>(i) * s.out_dim + j];
      }
      if (s.activation == Activation::relu) {
        smallest = std::min(smallest, std::abs(acc));
        acc = std::max(acc, 0.0);
      }
      z[static_cast<std::size_t>(j)] = acc;
    }
    a = std::move(z);
    offset = bias + static_cast<std::size_t>(s.out_dim);
  }
  return smallest;
}

Matrix kink_free_inputs(const ModelState& model, Rng& rng, int rows, double margin) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(rows, model.input_dim());
  std::vector<double> row(static_cast<std::size_t>(model.input_dim()));
  for (int r = 0; r < rows; ++r) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100000) {
        throw Error(ErrorCode::numeric, "no input row clears the kink margin");
      }
      for (double& v : row) {
        v = normal(rng);
      }
      if (min_abs_preactivation(model, row) >= margin) {
        break;
      }
    }
    for (int c = 0; c < model.input_dim(); ++c) {
      x(r, c) = row[static_cast<std::size_t>(c)];
    }
  }
  return x;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::optional<double> min_after(std::span<const std::pair<long, double>> trace, long start) {
  std::optional<double> m;
  for (const auto& [t, a] : trace) {
    if (t > start) {
      m = m ? std::min(*m, a) : a;
    }
  }
  return m;
}

std::optional<Gradient> gem_enumerate(const Gradient& g, std::span<const Gradient> task_grads, double tol) {
  const std::size_t m = task_grads.size();
  const std::size_t n = g.values.size();
  if (m > 20) {
    throw Error(ErrorCode::invalid_argument, "too many constraints to enumerate");
  }
  std::optional<Gradient> best;
  double best_dist = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::size_t{1} << i)) {
        active.push_back(i);
      }
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd gs(k, static_cast<Eigen::Index>(n));
    for (Eigen::Index a = 0; a < k; ++a) {
      for (std::size_t j = 0; j < n; ++j) {
        gs(a, static_cast<Eigen::Index>(j)) = task_grads[active[static_cast<std::size_t>(a)]].values[j];
      }
    }
    const Eigen::Map<const Eigen::VectorXd> gv(g.values.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    if (k > 0) {
      const Eigen::MatrixXd gram = gs * gs.transpose();
      v = gram.completeOrthogonalDecomposition().solve(-(gs * gv));
    }
    if (k > 0 && v.minCoeff() < -tol) {
      continue;
    }
    Eigen::VectorXd z = gv;
    if (k > 0) {
      z += gs.transpose() * v;
    }
    bool feasible = true;
    for (const auto& gn : task_grads) {
      const Eigen::Map<const Eigen::VectorXd> gnv(gn.values.data(), static_cast<Eigen::Index>(n));
      if (gnv.dot(z) < -tol * std::max(1.0, gnv.norm() * z.norm())) {
        feasible = false;
        break;
      }
    }
    if (!feasible) {
      continue;
    }
    const double dist = (z - gv).squaredNorm();
    if (!best || dist < best_dist) {
      best = Gradient{std::vector<double>(z.data(), z.data() + z.size())};
      best_dist = dist;
    }
  }
  return best;
}

namespace {

std::pair<double, double> brute_wf_wp(const std::vector<double>& a, int w) {
  double wf = 0.0;
  double wp = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t m = 0; m < n; ++m) {
      if (static_cast<long>(n - m) <= w - 1) {
        wf = std::max(wf, a[m] - a[n]);
        wp = std::max(wp, a[n] - a[m]);
      }
    }
  }
  return {wf, wp};
}

// Mixes uniform noise, quantized levels with ties, and monotone stretches.
std::vector<double> random_trace(Rng& rng, std::size_t len) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> kind(0, 2);
  std::vector<double> out(len);
  const int k = kind(rng);
  double level = u(rng);
  for (std::size_t i = 0; i < len; ++i) {
    switch (k) {
      case 0: out[i] = u(rng); break;
      case 1: out[i] = std::floor(u(rng) * 5.0) / 4.0; break;
      default:
        level = std::clamp(level + (u(rng) - 0.5) * 0.1, 0.0, 1.0);
        out[i] = level;
    }
  }
  return out;
}

}  // namespace

SuiteResult check_metrics(std::uint64_t seed, std::size_t n_traces) {
  SuiteResult res{"metrics", 0.0, 1e-12, 0};
  Rng rng = make_rng(seed, "oracle-metrics");
  std::uniform_int_distribution<std::size_t> len_dist(1, 500);
  std::uniform_int_distribution<int> w_pick(0, 3);
  for (std::size_t c = 0; c < n_traces; ++c) {
    const std::size_t len = len_dist(rng);
    const int choice = w_pick(rng);
    const int w = choice == 0 ? 2 : choice == 1 ? 10 : choice == 2 ? 100 : std::max<int>(2, static_cast<int>(len));
    const auto trace = random_trace(rng, len);
    std::uniform_int_distribution<long> start_dist(0, static_cast<long>(len));
    const long learned = start_dist(rng);
    const bool literal = (c % 2) == 1;

    MetricState state({w}, literal ? MinAccRange::eq2_literal : MinAccRange::post_learned);
    state.add_task(1, 0);
    std::vector<std::pair<long, double>> timed;
    for (std::size_t i = 0; i < len; ++i) {
      const long t = static_cast<long>(i) + 1;
      state.update({t, 1, trace[i], 1});
      timed.emplace_back(t, trace[i]);
      if (t == learned) {
        state.mark_learned(1, t, trace[i]);
      }
    }
    const auto [wf, wp] = brute_wf_wp(trace, w);
    const auto streamed = aggregate_wf_wp(state, w);
    // A second task makes task 1 count towards min-ACC.
    state.add_task(2, learned);
    res.max_error = std::max({res.max_error, std::abs(streamed.wf - wf), std::abs(streamed.wp - wp)});

    // eq2_literal counts every evaluation of task 1 (prev boundary 0); post_learned
    // only those after the learned point, which never happens when learned == 0.
    const std::optional<double> expected =
        literal ? min_after(timed, 0) : (learned >= 1 ? min_after(timed, learned) : std::nullopt);
    const auto got = min_acc(state, 2);
    if (expected.has_value() != got.has_value()) {
      res.max_error = std::max(res.max_error, 1.0);
    } else if (expected) {
      res.max_error = std::max(res.max_error, std::abs(*expected - *got));
    }
    ++res.cases;
  }
  return res;
}

SuiteResult check_gradients(std::uint64_t seed, std::size_t n_coords) {
  SuiteResult res{"gradients", 0.0, 1e-6, 0};
  Rng rng = make_rng(seed, "oracle-gradients");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<int> hidden{5};
  ModelState model = make_mlp(6, hidden, 4, seed);
  ModelState teacher = make_mlp(6, hidden, 4, seed + 1);
  for (double& p : model.params) {
    p += 0.1 * normal(rng);
  }
  Batch batch;
  batch.inputs = kink_free_inputs(model, rng, 7, 0.05);
  for (int r = 0; r < 7; ++r) {
    batch.labels.push_back(r % 4);
  }
  EwcState ewc;
  ewc.anchor = model;
  ewc.lambda = 0.7;
  for (double& p : ewc.anchor->params) {
    p += 0.3 * normal(rng);
  }
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    ewc.fisher.push_back(std::abs(normal(rng)));
  }

  std::uniform_int_distribution<std::size_t> pick(0, model.params.size() - 1);
  std::vector<std::size_t> coords;
  for (std::size_t i = 0; i < n_coords; ++i) {
    coords.push_back(pick(rng));
  }
  auto with = [&](std::span<const double> x) {
    ModelState m = model;
    m.params.assign(x.begin(), x.end());
    return m;
  };
  const double h = 1e-3;
  const auto ce_fd = central_differences([&](auto x) { return loss_value(with(x), batch); }, model.params, coords, h);
  const auto kd_fd = central_differences(
      [&](auto x) { return distill_loss_value(with(x), teacher, batch.inputs, 2.0); }, model.params, coords, h);
  const auto ewc_fd = central_differences([&](auto x) { return ewc_penalty(ewc, x); }, model.params, coords, h);
  const auto ce = loss_and_grad(model, batch).grad.values;
  const auto kd = distill_loss_and_grad(model, teacher, batch.inputs, 2.0).grad.values;
  const auto eg = ewc_penalty_grad(ewc, model.params).values;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const std::size_t c = coords[i];
    res.max_error = std::max({res.max_error, relative_error(ce[c], ce_fd[i], 1e-6),
                              relative_error(kd[c], kd_fd[i], 1e-6), relative_error(eg[c], ewc_fd[i], 1e-6)});
    res.cases += 3;
  }
  return res;
}

SuiteResult check_gem(std::uint64_t seed, std::size_t n_problems) {
  SuiteResult res{"gem", 0.0, 1e-8, 0};
  Rng rng = make_rng(seed, "oracle-gem");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t p = 0; p < n_problems; ++p) {
    auto draw = [&] {
      Gradient g{std::vector<double>(8)};
      for (double& v : g.values) {
        v = normal(rng);
      }
      return g;
    };
    const Gradient g = draw();
    std::vector<Gradient> tg{draw(), draw(), draw()};
    const auto dual = gem_project(g, tg, 0.0);
    const auto exact = gem_enumerate(g, tg);
    if (!exact) {
      res.max_error = std::max(res.max_error, 1.0);
      continue;
    }
    for (std::size_t j = 0; j < g.values.size(); ++j) {
      res.max_error = std::max(res.max_error, std::abs(dual.projected.values[j] - exact->values[j]));
    }
    for (const auto& gn : tg) {
      res.max_error = std::max(res.max_error, -dot(dual.projected.values, gn.values));
    }
    ++res.cases;
  }
  return res;
}

}  // namespace cleval::oracle
