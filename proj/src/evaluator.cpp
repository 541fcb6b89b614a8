#include "cleval/evaluator.hpp"

#include <algorithm>
#include <string>

namespace cleval {

void validate(const EvaluatorConfig& cfg) {
  if (cfg.rho_eval < 1) {
    throw Error(ErrorCode::config, "rho_eval must be >= 1");
  }
  if (cfg.window_sizes.empty()) {
    throw Error(ErrorCode::config, "at least one window size is required");
  }
  for (int w : cfg.window_sizes) {
    if (w < 2) {
      throw Error(ErrorCode::config, "window sizes must be >= 2");
    }
  }
  if (cfg.subsample.sample_size && *cfg.subsample.sample_size == 0) {
    throw Error(ErrorCode::config, "eval subsample size must be positive");
  }
}

double accuracy(const ModelState& model, const Matrix& inputs, std::span<const int> labels,
                std::span<const int> mask) {
  if (labels.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot evaluate on an empty sample");
  }
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw Error(ErrorCode::dimension, "inputs and labels disagree in length");
  }
  const Matrix logits = forward(model, inputs);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = -1;
    double best_v = 0.0;
    auto consider = [&](Eigen::Index c) {
      if (best < 0 || logits(r, c) > best_v || (logits(r, c) == best_v && c < best)) {
        best = c;
        best_v = logits(r, c);
      }
    };
    if (mask.empty()) {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        consider(c);
      }
    } else {
      for (int c : mask) {
        if (c < 0 || c >= logits.cols()) {
          throw Error(ErrorCode::dimension, "mask class outside the output head");
        }
        consider(c);
      }
    }
    if (best == labels[static_cast<std::size_t>(r)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<EvalRecord> evaluate_snapshot(const ModelState& snapshot, long t,
                                          std::span<const TaskSpec> tasks,
                                          std::span<const Dataset* const> sources,
                                          std::span<const std::vector<std::size_t>> indices,
                                          Scenario scenario) {
  if (sources.size() != tasks.size() || indices.size() != tasks.size()) {
    throw Error(ErrorCode::invalid_argument, "one source and index list per evaluation task");
  }
  std::vector<EvalRecord> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Dataset& src = *sources[i];
    const std::span<const int> mask =
        scenario == Scenario::task_incremental ? std::span<const int>(tasks[i].classes)
                                               : std::span<const int>();
    EvalRecord rec;
    rec.t = t;
    rec.eval_task = tasks[i].id;
    if (indices[i].empty()) {
      rec.accuracy = accuracy(snapshot, src.inputs, src.labels, mask);
      rec.n_samples = src.size();
    } else {
      const Dataset sub = subset(src, indices[i]);
      rec.accuracy = accuracy(snapshot, sub.inputs, sub.labels, mask);
      rec.n_samples = sub.size();
    }
    out.push_back(rec);
  }
  return out;
}

RunLog run(const TaskStream& stream, const MethodConfig& method, const TrainConfig& train,
           const EvaluatorConfig& eval, std::uint64_t seed) {
  RunLog log;
  log.window_sizes = eval.window_sizes;
  long t = 0;
  try {
    validate(eval);
    if (stream.n_tasks() < 1) {
      throw Error(ErrorCode::invalid_argument, "empty task stream");
    }
    if (train.batch_size < 1) {
      throw Error(ErrorCode::config, "batch_size must be >= 1");
    }
    ModelState model = make_mlp(stream.input_dim, train.hidden, stream.n_classes, seed);
    OptimizerState opt = make_optimizer(model, train.lr, train.momentum);
    Learner learner(std::move(model), std::move(opt), method, stream.n_tasks(), seed);
    MetricState state(eval.window_sizes, eval.min_acc_range);
    std::vector<EvalSampler> samplers;
    Rng batch_rng = make_rng(seed, "batches");

    const long total = stream.total_iters();
    for (t = 1; t <= total; ++t) {
      const int k = stream.task_at(t);
      while (state.n_tasks() < k) {
        const int id = state.n_tasks() + 1;
        state.add_task(id, id > 1 ? stream.boundaries[static_cast<std::size_t>(id - 2)] : 0);
        samplers.emplace_back(stream.tasks[static_cast<std::size_t>(id - 1)], eval.subsample, seed);
      }

      const StreamBatch sb = next_batch(stream, t, train.batch_size, batch_rng);
      const StepResult step = learner.step(sb.batch);
      log.probe_rows.push_back(ProbeRow{t, step.probe});

      const bool boundary = stream.is_boundary(t);
      const bool round = t % eval.rho_eval == 0 || (boundary && eval.force_boundary_eval);
      if (!round && !boundary) {
        continue;
      }

      const ModelState snapshot = learner.model();
      const auto tasks = std::span<const TaskSpec>(stream.tasks).first(static_cast<std::size_t>(k));
      std::vector<const Dataset*> sources;
      for (int i = 0; i < k; ++i) {
        sources.push_back(&samplers[static_cast<std::size_t>(i)].source());
      }

      std::vector<EvalRecord> full;
      if (boundary) {
        const std::vector<std::vector<std::size_t>> all(static_cast<std::size_t>(k));
        full = evaluate_snapshot(snapshot, t, tasks, sources, all, stream.scenario);
      }

      if (round) {
        std::vector<EvalRecord> records;
        if (boundary) {
          records = full;
        } else {
          std::vector<std::vector<std::size_t>> idx;
          for (int i = 0; i < k; ++i) {
            idx.push_back(samplers[static_cast<std::size_t>(i)].next());
          }
          records = evaluate_snapshot(snapshot, t, tasks, sources, idx, stream.scenario);
        }
        for (const auto& rec : records) {
          state.update(rec);
          log.eval_records.push_back(rec);
        }
        log.metric_reports.push_back(make_report(state, t, k));
      }

      if (boundary) {
        std::vector<double> fresh;
        for (const auto& rec : full) {
          fresh.push_back(rec.accuracy);
        }
        state.mark_learned(k, t, fresh.back());
        BoundarySummary s;
        s.task = k;
        s.t = t;
        s.acc = acc_final(k, fresh);
        s.forg = forg(state, k, fresh);
        s.min_acc = min_acc(state, k);
        s.wc_acc = wc_acc(fresh.back(), s.min_acc, k);
        for (int w : eval.window_sizes) {
          const auto m = aggregate_wf_wp(state, w);
          s.wf.push_back(m.wf);
          s.wp.push_back(m.wp);
        }
        s.fresh = std::move(fresh);
        log.boundary_summaries.push_back(std::move(s));
        learner.end_task(stream.tasks[static_cast<std::size_t>(k - 1)]);
      }
    }
  } catch (const Error& e) {
    log.error = RunError{e.code(), e.what(), t};
  }
  return log;
}

double eval_overhead_ratio(const TaskStream& stream, int k, long rho_eval) {
  if (k < 1 || k > stream.n_tasks()) {
    throw Error(ErrorCode::invalid_argument, "task index out of range");
  }
  if (rho_eval < 1) {
    throw Error(ErrorCode::invalid_argument, "rho_eval must be >= 1");
  }
  const long start = k > 1 ? stream.boundaries[static_cast<std::size_t>(k - 2)] : 0;
  return static_cast<double>(stream.boundaries[static_cast<std::size_t>(k - 1)] - start) /
         static_cast<double>(rho_eval);
}

}  // namespace cleval
