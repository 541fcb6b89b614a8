#include "cleval/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "cleval/error.hpp"

namespace cleval::cli {

std::vector<CurveSeries> build_curves(const std::vector<EvalTraceRow>& trace,
                                      const std::vector<MetricsRow>& metrics) {
  // Last evaluated iteration of each training task.
  std::map<int, long> task_end;
  for (const auto& m : metrics) {
    auto& end = task_end[m.current_task];
    end = std::max(end, m.t);
  }
  std::vector<long> boundaries;
  for (auto it = task_end.begin(); it != task_end.end() && std::next(it) != task_end.end(); ++it) {
    boundaries.push_back(it->second);
  }

  // task -> t -> per-seed accuracies; task -> seed -> post-learning minimum
  std::map<int, std::map<long, std::vector<double>>> points;
  std::map<int, std::map<std::uint64_t, double>> minima;
  std::map<std::uint64_t, bool> seeds;
  for (const auto& r : trace) {
    points[r.eval_task][r.t].push_back(r.accuracy);
    seeds[r.run_seed] = true;
    const auto end = task_end.find(r.eval_task);
    if (end != task_end.end() && std::next(end) != task_end.end() && r.t > end->second) {
      auto [it, fresh] = minima[r.eval_task].try_emplace(r.run_seed, r.accuracy);
      if (!fresh) {
        it->second = std::min(it->second, r.accuracy);
      }
    }
  }

  std::vector<CurveSeries> out;
  for (const auto& [task, by_t] : points) {
    CurveSeries c;
    c.eval_task = task;
    c.n_seeds = seeds.size();
    c.boundaries = boundaries;
    for (const auto& [t, accs] : by_t) {
      double mean = 0.0;
      for (double a : accs) {
        mean += a;
      }
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) {
        var += (a - mean) * (a - mean);
      }
      c.t.push_back(t);
      c.mean.push_back(mean);
      c.sd.push_back(std::sqrt(var / static_cast<double>(accs.size())));
    }
    if (const auto m = minima.find(task); m != minima.end() && !m->second.empty()) {
      double s = 0.0;
      for (const auto& [seed, v] : m->second) {
        s += v;
      }
      c.min_acc = s / static_cast<double>(m->second.size());
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const CurveSeries& c) {
  if (c.t.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot plot an empty curve");
  }
  constexpr double width = 720, height = 400;
  constexpr double left = 64, right = 24, top = 36, bottom = 56;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  double t0 = static_cast<double>(c.t.front());
  double t1 = static_cast<double>(c.t.back());
  if (t1 <= t0) {
    t0 -= 1.0;
    t1 += 1.0;
  }
  auto x = [&](double t) { return left + (t - t0) / (t1 - t0) * pw; };
  auto y = [&](double a) { return top + (1.0 - std::clamp(a, 0.0, 1.0)) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
       num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">Evaluation task " +
       std::to_string(c.eval_task) + "</text>\n";

  // axes and ticks
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
       num(top + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + ph) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double a = i / 4.0;
    s += "<line x1=\"" + num(left - 4) + "\" y1=\"" + num(y(a)) + "\" x2=\"" + num(left) + "\" y2=\"" +
         num(y(a)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(y(a) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(a) + "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double t = t0 + (t1 - t0) * i / 5.0;
    s += "<line x1=\"" + num(x(t)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(x(t)) + "\" y2=\"" +
         num(top + ph + 4) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(x(t)) + "\" y=\"" + num(top + ph + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
         std::to_string(std::lround(t)) + "</text>\n";
  }
  s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 12) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">iteration</text>\n";
  s += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\" transform=\"rotate(-90 16 " + num(top + ph / 2) + ")\">accuracy</text>\n";

  for (long b : c.boundaries) {
    if (b < t0 || b > t1) {
      continue;
    }
    s += "<line x1=\"" + num(x(b)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(x(b)) + "\" y2=\"" +
         num(top + ph) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }

  if (c.t.size() == 1) {
    s += "<circle cx=\"" + num(x(c.t[0])) + "\" cy=\"" + num(y(c.mean[0])) +
         "\" r=\"3\" fill=\"steelblue\"/>\n";
  } else {
    if (c.n_seeds > 1) {
      std::string band;
      for (std::size_t i = 0; i < c.t.size(); ++i) {
        band += num(x(c.t[i])) + "," + num(y(c.mean[i] + c.sd[i])) + " ";
      }
      for (std::size_t i = c.t.size(); i-- > 0;) {
        band += num(x(c.t[i])) + "," + num(y(c.mean[i] - c.sd[i])) + " ";
      }
      band.pop_back();
      s += "<polygon points=\"" + band + "\" fill=\"steelblue\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string line;
    for (std::size_t i = 0; i < c.t.size(); ++i) {
      line += num(x(c.t[i])) + "," + num(y(c.mean[i])) + " ";
    }
    line.pop_back();
    s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.2\"/>\n";
  }

  if (c.min_acc) {
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(y(*c.min_acc)) + "\" x2=\"" + num(left + pw) +
         "\" y2=\"" + num(y(*c.min_acc)) + "\" stroke=\"firebrick\" stroke-width=\"1\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::string> plot_curves(const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  const auto trace = parse_eval_trace(read_text((dir / "eval_trace.csv").string()));
  const auto metrics = parse_metrics(read_text((dir / "metrics.csv").string()));
  std::vector<std::string> written;
  for (const auto& curve : build_curves(trace, metrics)) {
    const auto path = (dir / ("accuracy_task" + std::to_string(curve.eval_task) + ".svg")).string();
    write_text(path, render_svg(curve));
    written.push_back(path);
  }
  return written;
}

}  // namespace cleval::cli
