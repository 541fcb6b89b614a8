#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cleval/nn.hpp"
#include "cleval/rng.hpp"
#include "cleval/streams.hpp"

namespace cleval {

/// Partial losses and gradient norms of one update, split into the
/// plasticity (current batch) and stability (past knowledge) terms.
struct StepProbe {
  double loss_plasticity = 0.0;
  double loss_stability = 0.0;
  double norm_grad_plasticity = 0.0;
  double norm_grad_stability = 0.0;
};

struct StepResult {
  StepProbe probe;
  Gradient applied;  // the gradient handed to sgd_step
};

// ---------------------------------------------------------------------------
// Replay

/// Class-balanced reservoir: every class seen so far gets capacity_total /
/// #classes slots, each filled by reservoir sampling over that class's stream.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity_total, std::uint64_t seed);

  void reservoir_update(std::span<const double> sample, int label);

  std::size_t capacity() const { return capacity_; }
  std::size_t class_capacity() const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::size_t stored(int label) const;
  std::size_t seen(int label) const;
  std::vector<int> classes() const;
  /// Stored samples of one class, row-major, one row per sample.
  const std::vector<std::vector<double>>& samples(int label) const;

  /// Uniform with-replacement batch of n stored samples.
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  struct ClassSlot {
    std::vector<std::vector<double>> samples;
    std::size_t seen = 0;
  };

  void rebalance();

  std::size_t capacity_;
  std::map<int, ClassSlot> slots_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// GEM

struct GemSolverOptions {
  int max_iters = 10000;
  double tol = 1e-10;
};

struct GemProjection {
  Gradient projected;   // g~
  Gradient stability;   // g~ - g_t, exactly zero when no constraint is violated
  bool violated = false;
  int iterations = 0;
};

/// Projects g_t onto {g : <g, g_n> >= 0 for all n} through the dual QP
///   min_{v >= margin} 1/2 v^T G G^T v + (G g_t)^T v,   g~ = g_t + G^T v,
/// solved by projected gradient with step 1/trace(G G^T) plus an active-set
/// refinement once the support settles.
GemProjection gem_project(const Gradient& g, std::span<const Gradient> task_grads,
                          double margin, const GemSolverOptions& opts = {});

struct GemMemory {
  std::vector<Batch> per_task;  // completed tasks only
  std::size_t per_task_size = 0;
  double margin = 0.5;
};

// ---------------------------------------------------------------------------
// Regularisation

struct LwfState {
  std::optional<ModelState> teacher;  // absent during the first task
  double temperature = 2.0;
};

enum class FisherMode { accumulate, latest };

struct EwcState {
  std::optional<ModelState> anchor;  // theta at the previous boundary
  std::vector<double> fisher;        // Omega, diagonal
  double lambda = 1.0;
};

/// lambda * sum Omega (theta - anchor)^2; zero without an anchor.
double ewc_penalty(const EwcState& ewc, std::span<const double> params);
Gradient ewc_penalty_grad(const EwcState& ewc, std::span<const double> params);

/// Diagonal Fisher: mean squared per-sample gradient of log p(y|x) with y drawn
/// from the model's own softmax, over min(n_samples, |data|) samples drawn
/// without replacement.
std::vector<double> fisher_estimate(const ModelState& model, const Dataset& data,
                                    std::size_t n_samples, Rng& rng);

// ---------------------------------------------------------------------------
// Update rules. Each performs exactly one sgd_step.

StepResult finetune_step(ModelState& model, OptimizerState& opt, const Batch& batch);

StepResult er_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                   const ReplayBuffer& buffer, double alpha, Rng& rng);

StepResult gem_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const GemMemory& memory, const GemSolverOptions& opts = {});

StepResult lwf_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const LwfState& lwf, double alpha);

StepResult ewc_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const EwcState& ewc, double alpha);

// ---------------------------------------------------------------------------

enum class MethodKind { finetune, er, gem, lwf, ewc };

struct MethodConfig {
  MethodKind kind = MethodKind::finetune;
  double alpha = 0.5;
  std::size_t buffer_capacity = 1000;
  double gem_margin = 0.5;
  double lwf_temperature = 2.0;
  double ewc_lambda = 1.0;
  std::size_t fisher_samples = 1024;
  FisherMode fisher_mode = FisherMode::accumulate;
};

/// Model, optimiser and method memory driven by the training loop.
class Learner {
 public:
  Learner(ModelState model, OptimizerState opt, MethodConfig cfg, int n_tasks,
          std::uint64_t seed);

  StepResult step(const Batch& batch);
  /// Freezes boundary state after the last iteration of `task`: fills the
  /// replay/GEM memory, snapshots the LwF teacher, refreshes EWC anchor/Fisher.
  void end_task(const TaskSpec& task);

  const ModelState& model() const { return model_; }
  const OptimizerState& optimizer() const { return opt_; }
  const MethodConfig& config() const { return cfg_; }
  const ReplayBuffer& replay() const { return replay_; }
  const GemMemory& gem() const { return gem_; }
  const LwfState& lwf() const { return lwf_; }
  const EwcState& ewc() const { return ewc_; }

 private:
  ModelState model_;
  OptimizerState opt_;
  MethodConfig cfg_;
  int n_tasks_;
  std::uint64_t seed_;
  Rng replay_rng_;
  ReplayBuffer replay_;
  GemMemory gem_;
  LwfState lwf_;
  EwcState ewc_;
};

}  // namespace cleval
