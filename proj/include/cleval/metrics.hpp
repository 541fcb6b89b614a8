#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cleval {

/// Where an evaluation task's running minimum starts counting.
/// post_learned: n > |T_i| (after the task has been learned).
/// eq2_literal:  n > |T_{i-1}| (includes the task's own training period).
enum class MinAccRange { post_learned, eq2_literal };

struct EvalRecord {
  long t = 0;
  int eval_task = 1;
  double accuracy = 0.0;
  std::size_t n_samples = 0;
};

/// Worst in-window drop and rise of one accuracy trace, over windows of w
/// consecutive evaluations, in O(w) memory.
class WindowTracker {
 public:
  explicit WindowTracker(int window);

  void push(double accuracy);

  int window() const { return window_; }
  double wf() const { return wf_; }
  double wp() const { return wp_; }
  std::size_t max_deque_size() const { return std::max(max_q_.size(), min_q_.size()); }

 private:
  int window_;
  long count_ = 0;
  // (evaluation index, accuracy); max_q_ nonincreasing, min_q_ nondecreasing.
  std::deque<std::pair<long, double>> max_q_;
  std::deque<std::pair<long, double>> min_q_;
  double wf_ = 0.0;
  double wp_ = 0.0;
};

struct TaskTrackerState {
  int task = 1;
  std::optional<long> learned_at;
  std::optional<double> acc_at_learned;
  std::optional<long> min_range_start;  // running_min covers t > min_range_start
  std::optional<double> running_min;
  std::optional<double> last_acc;
  long last_t = 0;
  std::vector<WindowTracker> windows;  // one per window size
};

class MetricState {
 public:
  explicit MetricState(std::vector<int> window_sizes = {10, 100},
                       MinAccRange range = MinAccRange::post_learned);

  /// Registers evaluation task `task` (must be the next id). `prev_boundary` is
  /// |T_{task-1}| (0 for the first task).
  void add_task(int task, long prev_boundary);
  /// Records |T_i| and A(E_i, f_{|T_i|}).
  void mark_learned(int task, long t, double accuracy);
  void update(const EvalRecord& record);

  const std::vector<int>& window_sizes() const { return window_sizes_; }
  const std::vector<TaskTrackerState>& tasks() const { return tasks_; }
  const TaskTrackerState& task(int id) const;
  int n_tasks() const { return static_cast<int>(tasks_.size()); }
  MinAccRange range() const { return range_; }

 private:
  std::vector<int> window_sizes_;
  MinAccRange range_;
  std::vector<TaskTrackerState> tasks_;
};

/// Mean running minimum over tasks i < k with an active range; empty for k = 1.
std::optional<double> min_acc(const MetricState& state, int k);

/// (1/k) acc_current + (1 - 1/k) min_acc; acc_current for k = 1.
double wc_acc(double acc_current, std::optional<double> min_acc, int k);

/// Mean of A(E_i, f_{|T_k|}) for i = 1..k.
double acc_final(int k, std::span<const double> fresh_accuracies);

/// (1/(k-1)) sum_{i<k} (A(E_i, f_{|T_i|}) - A(E_i, f_{|T_k|})); empty for k = 1.
std::optional<double> forg(const MetricState& state, int k,
                           std::span<const double> fresh_accuracies);

struct WindowedMetrics {
  double wf = 0.0;
  double wp = 0.0;
};

/// Plain mean of per-task WF^w / WP^w over all registered evaluation tasks.
WindowedMetrics aggregate_wf_wp(const MetricState& state, int window);

/// Brute force over all pairs m < n with n - m <= w - 1, floored at 0.
WindowedMetrics oracle_wf_wp(std::span<const double> trace, int window);

struct MetricReport {
  long t = 0;
  int current_task = 1;
  double acc_current = 0.0;
  std::optional<double> min_acc;
  double wc_acc = 0.0;
  std::vector<double> wf;  // per window size
  std::vector<double> wp;
  std::optional<double> acc;   // boundaries only
  std::optional<double> forg;  // boundaries only, k >= 2
};

/// Snapshot of all streaming metrics after the evaluation round at t.
MetricReport make_report(const MetricState& state, long t, int current_task);

}  // namespace cleval
