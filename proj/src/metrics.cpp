#include "cleval/metrics.hpp"

#include <algorithm>
#include <string>

#include "cleval/error.hpp"

namespace cleval {

WindowTracker::WindowTracker(int window) : window_(window) {
  if (window < 2) {
    throw Error(ErrorCode::invalid_argument, "window size must be at least 2");
  }
}

void WindowTracker::push(double accuracy) {
  const long n = count_++;
  if (!max_q_.empty()) {
    wf_ = std::max(wf_, max_q_.front().second - accuracy);
    wp_ = std::max(wp_, accuracy - min_q_.front().second);
  }
  while (!max_q_.empty() && max_q_.back().second <= accuracy) {
    max_q_.pop_back();
  }
  max_q_.emplace_back(n, accuracy);
  while (!min_q_.empty() && min_q_.back().second >= accuracy) {
    min_q_.pop_back();
  }
  min_q_.emplace_back(n, accuracy);
  // The next point's window of predecessors is [n - w + 2, n].
  const long oldest = n - window_ + 2;
  while (max_q_.front().first < oldest) {
    max_q_.pop_front();
  }
  while (min_q_.front().first < oldest) {
    min_q_.pop_front();
  }
}

MetricState::MetricState(std::vector<int> window_sizes, MinAccRange range)
    : window_sizes_(std::move(window_sizes)), range_(range) {
  for (int w : window_sizes_) {
    if (w < 2) {
      throw Error(ErrorCode::invalid_argument, "window size must be at least 2");
    }
  }
}

void MetricState::add_task(int task, long prev_boundary) {
  if (task != n_tasks() + 1) {
    throw Error(ErrorCode::ordering, "evaluation task " + std::to_string(task) +
                                         " added out of order");
  }
  TaskTrackerState s;
  s.task = task;
  if (range_ == MinAccRange::eq2_literal) {
    s.min_range_start = prev_boundary;
  }
  for (int w : window_sizes_) {
    s.windows.emplace_back(w);
  }
  tasks_.push_back(std::move(s));
}

const TaskTrackerState& MetricState::task(int id) const {
  if (id < 1 || id > n_tasks()) {
    throw Error(ErrorCode::invalid_argument, "unknown evaluation task " + std::to_string(id));
  }
  return tasks_[static_cast<std::size_t>(id - 1)];
}

void MetricState::mark_learned(int task_id, long t, double accuracy) {
  task(task_id);
  auto& s = tasks_[static_cast<std::size_t>(task_id - 1)];
  s.learned_at = t;
  s.acc_at_learned = accuracy;
  if (range_ == MinAccRange::post_learned) {
    s.min_range_start = t;
  }
}

void MetricState::update(const EvalRecord& record) {
  task(record.eval_task);
  if (!(record.accuracy >= 0.0 && record.accuracy <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "accuracy outside [0, 1]");
  }
  auto& s = tasks_[static_cast<std::size_t>(record.eval_task - 1)];
  if (s.last_acc && record.t <= s.last_t) {
    throw Error(ErrorCode::ordering, "evaluation task " + std::to_string(record.eval_task) +
                                         ": t=" + std::to_string(record.t) +
                                         " does not increase past " + std::to_string(s.last_t));
  }
  s.last_t = record.t;
  s.last_acc = record.accuracy;
  if (s.min_range_start && record.t > *s.min_range_start) {
    s.running_min = s.running_min ? std::min(*s.running_min, record.accuracy) : record.accuracy;
  }
  for (auto& w : s.windows) {
    w.push(record.accuracy);
  }
}

std::optional<double> min_acc(const MetricState& state, int k) {
  if (k < 1) {
    throw Error(ErrorCode::invalid_argument, "current task must be >= 1");
  }
  double sum = 0.0;
  int n = 0;
  for (const auto& s : state.tasks()) {
    if (s.task < k && s.running_min) {
      sum += *s.running_min;
      ++n;
    }
  }
  if (n == 0) {
    return std::nullopt;
  }
  return sum / n;
}

double wc_acc(double acc_current, std::optional<double> min_acc, int k) {
  if (k < 1) {
    throw Error(ErrorCode::invalid_argument, "current task must be >= 1");
  }
  if (k == 1 || !min_acc) {
    return acc_current;
  }
  const double inv = 1.0 / k;
  return inv * acc_current + (1.0 - inv) * *min_acc;
}

double acc_final(int k, std::span<const double> fresh_accuracies) {
  if (k < 1 || fresh_accuracies.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::invalid_argument, "ACC needs one boundary accuracy per task 1.." +
                                                 std::to_string(k));
  }
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    sum += fresh_accuracies[static_cast<std::size_t>(i)];
  }
  return sum / k;
}

std::optional<double> forg(const MetricState& state, int k,
                           std::span<const double> fresh_accuracies) {
  if (k <= 1) {
    return std::nullopt;
  }
  if (fresh_accuracies.size() < static_cast<std::size_t>(k - 1)) {
    throw Error(ErrorCode::invalid_argument, "FORG needs boundary accuracies for tasks < k");
  }
  double sum = 0.0;
  for (int i = 1; i < k; ++i) {
    const auto& s = state.task(i);
    if (!s.acc_at_learned) {
      throw Error(ErrorCode::invalid_argument,
                  "task " + std::to_string(i) + " has no post-learning accuracy");
    }
    sum += *s.acc_at_learned - fresh_accuracies[static_cast<std::size_t>(i - 1)];
  }
  return sum / (k - 1);
}

WindowedMetrics aggregate_wf_wp(const MetricState& state, int window) {
  const auto& ws = state.window_sizes();
  const auto it = std::find(ws.begin(), ws.end(), window);
  if (it == ws.end()) {
    throw Error(ErrorCode::invalid_argument, "window " + std::to_string(window) + " not tracked");
  }
  if (state.n_tasks() == 0) {
    throw Error(ErrorCode::invalid_argument, "no evaluation tasks registered");
  }
  const auto idx = static_cast<std::size_t>(std::distance(ws.begin(), it));
  WindowedMetrics out;
  for (const auto& s : state.tasks()) {
    out.wf += s.windows[idx].wf();
    out.wp += s.windows[idx].wp();
  }
  out.wf /= state.n_tasks();
  out.wp /= state.n_tasks();
  return out;
}

WindowedMetrics oracle_wf_wp(std::span<const double> trace, int window) {
  WindowedMetrics out;
  for (std::size_t n = 0; n < trace.size(); ++n) {
    for (std::size_t m = 0; m < n; ++m) {
      if (n - m > static_cast<std::size_t>(window - 1)) {
        continue;
      }
      out.wf = std::max(out.wf, trace[m] - trace[n]);
      out.wp = std::max(out.wp, trace[n] - trace[m]);
    }
  }
  return out;
}

MetricReport make_report(const MetricState& state, long t, int current_task) {
  const auto& cur = state.task(current_task);
  if (!cur.last_acc) {
    throw Error(ErrorCode::invalid_argument, "current task has not been evaluated");
  }
  MetricReport r;
  r.t = t;
  r.current_task = current_task;
  r.acc_current = *cur.last_acc;
  r.min_acc = min_acc(state, current_task);
  r.wc_acc = wc_acc(r.acc_current, r.min_acc, current_task);
  for (int w : state.window_sizes()) {
    const auto m = aggregate_wf_wp(state, w);
    r.wf.push_back(m.wf);
    r.wp.push_back(m.wp);
  }
  return r;
}

}  // namespace cleval
