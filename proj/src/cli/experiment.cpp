#include "cleval/cli/experiment.hpp"

#include <cmath>
#include <filesystem>

#include "cleval/cli/plot.hpp"
#include "cleval/error.hpp"

namespace cleval::cli {

namespace fs = std::filesystem;

std::optional<RunError> ExperimentResult::error() const {
  for (const auto& r : runs) {
    if (r.log.error) {
      return r.log.error;
    }
  }
  return std::nullopt;
}

double ExperimentResult::mean_acc() const {
  if (runs.empty()) {
    throw Error(ErrorCode::invalid_argument, "no runs");
  }
  double s = 0.0;
  for (const auto& r : runs) {
    if (!r.log.ok() || r.log.boundary_summaries.empty()) {
      throw Error(ErrorCode::invalid_argument, "run for seed " + std::to_string(r.seed) + " is incomplete");
    }
    s += r.log.boundary_summaries.back().acc;
  }
  return s / static_cast<double>(runs.size());
}

std::string resolve_output_dir(const RunConfig& cfg, const std::string& output_root) {
  const fs::path dir(cfg.output_dir);
  if (output_root.empty() || dir.is_absolute()) {
    return dir.string();
  }
  return (fs::path(output_root) / dir).string();
}

void ensure_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::io, "cannot create output directory " + dir + ": " + ec.message());
  }
  const auto probe = (fs::path(dir) / ".write_check").string();
  write_text(probe, "");
  fs::remove(probe, ec);
}

std::vector<EvalTraceRow> eval_trace_rows(const std::vector<SeedRun>& runs) {
  std::vector<EvalTraceRow> out;
  for (const auto& r : runs) {
    for (const auto& e : r.log.eval_records) {
      out.push_back({r.seed, e.t, e.eval_task, e.n_samples, e.accuracy});
    }
  }
  return out;
}

std::vector<MetricsRow> metrics_rows(const std::vector<SeedRun>& runs) {
  std::vector<MetricsRow> out;
  for (const auto& r : runs) {
    for (const auto& m : r.log.metric_reports) {
      out.push_back({r.seed, m.t, m.current_task, m.acc_current, m.min_acc, m.wc_acc, m.wf, m.wp});
    }
  }
  return out;
}

std::vector<ProbeCsvRow> probe_rows(const std::vector<SeedRun>& runs) {
  std::vector<ProbeCsvRow> out;
  for (const auto& r : runs) {
    for (const auto& p : r.log.probe_rows) {
      out.push_back({r.seed, p.t, p.probe.loss_plasticity, p.probe.loss_stability,
                     p.probe.norm_grad_plasticity, p.probe.norm_grad_stability});
    }
  }
  return out;
}

namespace {

std::vector<std::optional<double>> wrap(const std::vector<double>& xs) {
  return {xs.begin(), xs.end()};
}

// Mean and population SD of each column over rows where the value is present.
void summarize(const std::vector<FinalRow>& rows, FinalRow& mean, FinalRow& sd) {
  auto stats = [&](auto get) -> std::pair<std::optional<double>, std::optional<double>> {
    std::vector<double> xs;
    for (const auto& r : rows) {
      if (auto v = get(r)) {
        xs.push_back(*v);
      }
    }
    if (xs.empty()) {
      return {std::nullopt, std::nullopt};
    }
    double m = 0.0;
    for (double x : xs) {
      m += x;
    }
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) {
      v += (x - m) * (x - m);
    }
    return {m, std::sqrt(v / static_cast<double>(xs.size()))};
  };
  std::tie(mean.acc, sd.acc) = stats([](const FinalRow& r) { return r.acc; });
  std::tie(mean.forg, sd.forg) = stats([](const FinalRow& r) { return r.forg; });
  std::tie(mean.min_acc, sd.min_acc) = stats([](const FinalRow& r) { return r.min_acc; });
  std::tie(mean.wc_acc, sd.wc_acc) = stats([](const FinalRow& r) { return r.wc_acc; });
  for (std::size_t w = 0; w < mean.wf.size(); ++w) {
    std::tie(mean.wf[w], sd.wf[w]) = stats([w](const FinalRow& r) { return r.wf[w]; });
    std::tie(mean.wp[w], sd.wp[w]) = stats([w](const FinalRow& r) { return r.wp[w]; });
  }
}

}  // namespace

std::vector<FinalRow> final_rows(const std::vector<SeedRun>& runs, std::size_t n_windows) {
  std::vector<FinalRow> out;
  std::vector<FinalRow> complete;
  for (const auto& r : runs) {
    FinalRow row;
    row.run_seed = std::to_string(r.seed);
    row.wf.assign(n_windows, std::nullopt);
    row.wp.assign(n_windows, std::nullopt);
    if (r.log.ok() && !r.log.boundary_summaries.empty()) {
      const auto& b = r.log.boundary_summaries.back();
      row.acc = b.acc;
      row.forg = b.forg;
      row.min_acc = b.min_acc;
      row.wc_acc = b.wc_acc;
      row.wf = wrap(b.wf);
      row.wp = wrap(b.wp);
      complete.push_back(row);
    }
    out.push_back(std::move(row));
  }
  FinalRow mean;
  FinalRow sd;
  mean.run_seed = "mean";
  sd.run_seed = "sd";
  mean.wf.assign(n_windows, std::nullopt);
  mean.wp.assign(n_windows, std::nullopt);
  sd.wf = mean.wf;
  sd.wp = mean.wp;
  summarize(complete, mean, sd);
  out.push_back(std::move(mean));
  out.push_back(std::move(sd));
  return out;
}

ExperimentResult run_experiment(const RunConfig& cfg, const std::string& output_root) {
  validate(cfg);
  ExperimentResult result;
  result.dir = resolve_output_dir(cfg, output_root);
  ensure_writable_dir(result.dir);
  const fs::path dir(result.dir);
  write_text((dir / "config.cfg").string(), to_text(cfg));

  const TaskStream stream = build_stream(cfg);
  const MethodConfig method = method_config(cfg);
  const TrainConfig train = train_config(cfg);
  const EvaluatorConfig eval = evaluator_config(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    result.runs.push_back({seed, run(stream, method, train, eval, seed)});
  }

  write_text((dir / "eval_trace.csv").string(), eval_trace_csv(eval_trace_rows(result.runs)));
  write_text((dir / "metrics.csv").string(), metrics_csv(metrics_rows(result.runs), cfg.window_sizes));
  write_text((dir / "probes.csv").string(), probes_csv(probe_rows(result.runs)));
  write_text((dir / "final.csv").string(),
             final_csv(final_rows(result.runs, cfg.window_sizes.size()), cfg.window_sizes));
  if (!eval_trace_rows(result.runs).empty()) {
    result.plots = plot_curves(result.dir);
  }
  return result;
}

std::vector<std::vector<std::pair<std::string, std::string>>> grid_cells(const Grid& grid) {
  if (grid.empty()) {
    throw Error(ErrorCode::config, "empty grid");
  }
  std::vector<std::vector<std::pair<std::string, std::string>>> cells{{}};
  for (const auto& [key, values] : grid) {
    if (values.empty()) {
      throw Error(ErrorCode::config, "grid key '" + key + "' has no values");
    }
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& cell : cells) {
      for (const auto& v : values) {
        auto c = cell;
        c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

GridResult grid_search(const RunConfig& base, const Grid& grid, const std::string& output_root) {
  const auto cells = grid_cells(grid);
  const std::string base_dir = resolve_output_dir(base, output_root);
  ensure_writable_dir(base_dir);

  GridResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    GridCell cell;
    cell.settings = cells[i];
    cell.config = base;
    for (const auto& [key, value] : cell.settings) {
      try {
        set_key(cell.config, key, value);
      } catch (const Error& e) {
        throw Error(ErrorCode::config, "grid cell " + std::to_string(i) + ": " + e.what());
      }
    }
    cell.config.output_dir = (fs::path(base_dir) / ("cell_" + std::to_string(i))).string();
    const ExperimentResult exp = run_experiment(cell.config);
    if (const auto err = exp.error()) {
      if (err->code != ErrorCode::numeric) {
        throw Error(err->code, "grid cell " + std::to_string(i) + ": " + err->message);
      }
      cell.diverged = true;
      cell.score = 0.0;
    } else {
      cell.score = exp.mean_acc();
    }
    if (i == 0 || cell.score > result.cells[result.best].score) {
      result.best = i;
    }
    result.cells.push_back(std::move(cell));
  }

  CsvTable report;
  report.header.push_back("cell");
  for (const auto& [key, values] : grid) {
    report.header.push_back(key);
  }
  report.header.push_back("score");
  report.header.push_back("status");
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    std::vector<std::string> row{std::to_string(i)};
    for (const auto& kv : c.settings) {
      row.push_back(kv.second);
    }
    row.push_back(format_double(c.score));
    row.push_back(c.diverged ? "diverged" : (i == result.best ? "best" : "ok"));
    report.rows.push_back(std::move(row));
  }
  write_text((fs::path(base_dir) / "grid_report.csv").string(), write_csv(report));
  write_text((fs::path(base_dir) / "best.cfg").string(), to_text(result.cells[result.best].config));
  return result;
}

}  // namespace cleval::cli
