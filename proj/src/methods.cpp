#include "cleval/methods.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cleval/error.hpp"

namespace cleval {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

StepResult combine_and_step(ModelState& model, OptimizerState& opt, double alpha,
                            const LossGrad& plasticity, const LossGrad& stability) {
  StepResult r;
  r.probe.loss_plasticity = plasticity.loss;
  r.probe.loss_stability = stability.loss;
  r.probe.norm_grad_plasticity = l2_norm(plasticity.grad.values);
  r.probe.norm_grad_stability = l2_norm(stability.grad.values);
  r.applied = weighted_sum(alpha, plasticity.grad, 1.0 - alpha, stability.grad);
  sgd_step(model, opt, r.applied);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity_total, std::uint64_t seed)
    : capacity_(capacity_total), rng_(make_rng(seed, "replay-reservoir")) {}

std::size_t ReplayBuffer::class_capacity() const {
  return slots_.empty() ? capacity_ : capacity_ / slots_.size();
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& [label, slot] : slots_) {
    n += slot.samples.size();
  }
  return n;
}

std::size_t ReplayBuffer::stored(int label) const {
  const auto it = slots_.find(label);
  return it == slots_.end() ? 0 : it->second.samples.size();
}

std::size_t ReplayBuffer::seen(int label) const {
  const auto it = slots_.find(label);
  return it == slots_.end() ? 0 : it->second.seen;
}

std::vector<int> ReplayBuffer::classes() const {
  std::vector<int> out;
  for (const auto& [label, slot] : slots_) {
    out.push_back(label);
  }
  return out;
}

const std::vector<std::vector<double>>& ReplayBuffer::samples(int label) const {
  const auto it = slots_.find(label);
  if (it == slots_.end()) {
    throw Error(ErrorCode::invalid_argument, "class " + std::to_string(label) + " not in buffer");
  }
  return it->second.samples;
}

void ReplayBuffer::rebalance() {
  const std::size_t cap = class_capacity();
  for (auto& [label, slot] : slots_) {
    while (slot.samples.size() > cap) {
      std::uniform_int_distribution<std::size_t> pick(0, slot.samples.size() - 1);
      const std::size_t j = pick(rng_);
      std::swap(slot.samples[j], slot.samples.back());
      slot.samples.pop_back();
    }
  }
}

void ReplayBuffer::reservoir_update(std::span<const double> sample, int label) {
  if (label < 0) {
    throw Error(ErrorCode::invalid_argument, "negative class label");
  }
  auto [it, inserted] = slots_.try_emplace(label);
  if (inserted) {
    rebalance();
  }
  auto& slot = it->second;
  slot.seen += 1;
  const std::size_t cap = class_capacity();
  if (slot.samples.size() < cap) {
    slot.samples.emplace_back(sample.begin(), sample.end());
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, slot.seen - 1);
  const std::size_t j = pick(rng_);
  if (j < cap) {
    slot.samples[j].assign(sample.begin(), sample.end());
  }
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<std::pair<int, std::size_t>> index;
  for (const auto& [label, slot] : slots_) {
    for (std::size_t i = 0; i < slot.samples.size(); ++i) {
      index.emplace_back(label, i);
    }
  }
  if (index.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot sample from an empty replay buffer");
  }
  const auto dims = static_cast<Eigen::Index>(slots_.at(index.front().first).samples.front().size());
  Batch out;
  out.inputs.resize(static_cast<Eigen::Index>(n), dims);
  out.labels.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& [label, i] = index[pick(rng)];
    const auto& row = slots_.at(label).samples[i];
    out.inputs.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), dims);
    out.labels.push_back(label);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GEM projection

namespace {

// Natural residual max_i |u_i - max(0, u_i - grad_i)| of the bound-constrained QP.
double kkt_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& grad) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    r = std::max(r, std::abs(u(i) - std::max(0.0, u(i) - grad(i))));
  }
  return r;
}

// Solves the equality system on the candidate support and keeps it only if the
// result is primal feasible.
std::optional<Eigen::VectorXd> solve_on_support(const Eigen::MatrixXd& p, const Eigen::VectorXd& c,
                                                const std::vector<Eigen::Index>& support) {
  const auto m = static_cast<Eigen::Index>(support.size());
  Eigen::VectorXd u = Eigen::VectorXd::Zero(c.size());
  if (m == 0) {
    return u;
  }
  Eigen::MatrixXd ps(m, m);
  Eigen::VectorXd cs(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    cs(a) = c(support[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) {
      ps(a, b) = p(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
    }
  }
  const Eigen::VectorXd us = ps.colPivHouseholderQr().solve(-cs);
  if (!us.allFinite()) {
    return std::nullopt;
  }
  for (Eigen::Index a = 0; a < m; ++a) {
    if (us(a) < 0.0) {
      return std::nullopt;
    }
    u(support[static_cast<std::size_t>(a)]) = us(a);
  }
  return u;
}

}  // namespace

GemProjection gem_project(const Gradient& g, std::span<const Gradient> task_grads,
                          double margin, const GemSolverOptions& opts) {
  if (!(margin >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "GEM margin must be nonnegative");
  }
  const std::size_t n = g.values.size();
  for (const auto& gn : task_grads) {
    if (gn.values.size() != n) {
      throw Error(ErrorCode::dimension, "GEM task gradient length differs from g_t");
    }
  }
  GemProjection out;
  out.projected = g;
  out.stability.values.assign(n, 0.0);

  const auto m = static_cast<Eigen::Index>(task_grads.size());
  Eigen::VectorXd gg(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    gg(i) = dot(g.values, task_grads[static_cast<std::size_t>(i)].values);
  }
  if (m == 0 || gg.minCoeff() >= 0.0) {
    return out;
  }
  out.violated = true;

  Eigen::MatrixXd p(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      p(i, j) = p(j, i) = dot(task_grads[static_cast<std::size_t>(i)].values,
                              task_grads[static_cast<std::size_t>(j)].values);
    }
  }
  // Shift v = u + margin so the bound becomes u >= 0.
  const Eigen::VectorXd c = gg + margin * (p * Eigen::VectorXd::Ones(m));
  const double lipschitz = p.trace();
  const double scale = std::max({c.cwiseAbs().maxCoeff(), p.diagonal().maxCoeff(), 1e-300});
  const double tol = opts.tol * scale;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  double residual = kkt_residual(u, c);
  bool converged = false;
  int iter = 0;
  for (; iter <= opts.max_iters; ++iter) {
    const Eigen::VectorXd grad = p * u + c;
    residual = kkt_residual(u, grad);
    if (residual <= tol) {
      converged = true;
      break;
    }
    if (iter % 10 == 0) {
      std::vector<Eigen::Index> support;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (u(i) > 0.0 || grad(i) < 0.0) {
          support.push_back(i);
        }
      }
      if (auto polished = solve_on_support(p, c, support)) {
        const double r = kkt_residual(*polished, p * *polished + c);
        if (r <= tol) {
          u = *polished;
          residual = r;
          converged = true;
          break;
        }
      }
    }
    u = (u - grad / lipschitz).cwiseMax(0.0);
  }
  out.iterations = iter;
  if (!converged) {
    throw Error(ErrorCode::solver, "GEM dual solver did not converge after " +
                                       std::to_string(opts.max_iters) +
                                       " iterations, residual " + std::to_string(residual));
  }

  const Eigen::VectorXd v = u.array() + margin;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& gn = task_grads[static_cast<std::size_t>(i)].values;
    for (std::size_t j = 0; j < n; ++j) {
      out.projected.values[j] += v(i) * gn[j];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.stability.values[j] = out.projected.values[j] - g.values[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// EWC

double ewc_penalty(const EwcState& ewc, std::span<const double> params) {
  if (!ewc.anchor) {
    return 0.0;
  }
  const auto& anchor = ewc.anchor->params;
  if (anchor.size() != params.size() || ewc.fisher.size() != params.size()) {
    throw Error(ErrorCode::dimension, "EWC state does not match parameter vector");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = params[i] - anchor[i];
    s += ewc.fisher[i] * d * d;
  }
  return ewc.lambda * s;
}

Gradient ewc_penalty_grad(const EwcState& ewc, std::span<const double> params) {
  Gradient out{std::vector<double>(params.size(), 0.0)};
  if (!ewc.anchor) {
    return out;
  }
  const auto& anchor = ewc.anchor->params;
  if (anchor.size() != params.size() || ewc.fisher.size() != params.size()) {
    throw Error(ErrorCode::dimension, "EWC state does not match parameter vector");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.values[i] = 2.0 * ewc.lambda * ewc.fisher[i] * (params[i] - anchor[i]);
  }
  return out;
}

std::vector<double> fisher_estimate(const ModelState& model, const Dataset& data,
                                    std::size_t n_samples, Rng& rng) {
  if (data.size() == 0 || n_samples == 0) {
    throw Error(ErrorCode::invalid_argument, "Fisher estimate needs at least one sample");
  }
  const std::size_t k = std::min(n_samples, data.size());
  const auto idx = subsample_indices(data.size(), EvalSubsampleConfig{k, true, EvalSource::eval_split}, rng);
  const Dataset sub = subset(data, idx);
  const ForwardCache cache = forward_cached(model, sub.inputs);
  Matrix dlogits = softmax(cache.activations.back());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index r = 0; r < dlogits.rows(); ++r) {
    const double u = unif(rng);
    double cum = 0.0;
    Eigen::Index y = dlogits.cols() - 1;
    for (Eigen::Index c = 0; c < dlogits.cols(); ++c) {
      cum += dlogits(r, c);
      if (u < cum) {
        y = c;
        break;
      }
    }
    dlogits(r, y) -= 1.0;
  }
  auto fisher = squared_sample_gradient_sum(model, cache, dlogits);
  for (double& f : fisher) {
    f /= static_cast<double>(k);
  }
  return fisher;
}

// ---------------------------------------------------------------------------
// Update rules

StepResult finetune_step(ModelState& model, OptimizerState& opt, const Batch& batch) {
  LossGrad lg = loss_and_grad(model, batch);
  StepResult r;
  r.probe.loss_plasticity = lg.loss;
  r.probe.norm_grad_plasticity = l2_norm(lg.grad.values);
  r.applied = std::move(lg.grad);
  sgd_step(model, opt, r.applied);
  return r;
}

StepResult er_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                   const ReplayBuffer& buffer, double alpha, Rng& rng) {
  check_alpha(alpha);
  if (buffer.empty()) {
    return finetune_step(model, opt, batch);
  }
  const LossGrad plasticity = loss_and_grad(model, batch);
  const Batch memory = buffer.sample(batch.labels.size(), rng);
  const LossGrad stability = loss_and_grad(model, memory);
  return combine_and_step(model, opt, alpha, plasticity, stability);
}

StepResult gem_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const GemMemory& memory, const GemSolverOptions& opts) {
  if (memory.per_task.empty()) {
    return finetune_step(model, opt, batch);
  }
  const LossGrad current = loss_and_grad(model, batch);
  std::vector<Gradient> task_grads;
  double memory_loss = 0.0;
  for (const auto& mk : memory.per_task) {
    LossGrad lg = loss_and_grad(model, mk);
    memory_loss += lg.loss;
    task_grads.push_back(std::move(lg.grad));
  }
  GemProjection proj = gem_project(current.grad, task_grads, memory.margin, opts);
  StepResult r;
  r.probe.loss_plasticity = current.loss;
  r.probe.loss_stability = memory_loss / static_cast<double>(memory.per_task.size());
  r.probe.norm_grad_plasticity = l2_norm(current.grad.values);
  r.probe.norm_grad_stability = l2_norm(proj.stability.values);
  r.applied = std::move(proj.projected);
  sgd_step(model, opt, r.applied);
  return r;
}

StepResult lwf_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const LwfState& lwf, double alpha) {
  check_alpha(alpha);
  if (!lwf.teacher) {
    return finetune_step(model, opt, batch);
  }
  const LossGrad plasticity = loss_and_grad(model, batch);
  const LossGrad stability =
      distill_loss_and_grad(model, *lwf.teacher, batch.inputs, lwf.temperature);
  return combine_and_step(model, opt, alpha, plasticity, stability);
}

StepResult ewc_step(ModelState& model, OptimizerState& opt, const Batch& batch,
                    const EwcState& ewc, double alpha) {
  check_alpha(alpha);
  if (!ewc.anchor) {
    return finetune_step(model, opt, batch);
  }
  const LossGrad plasticity = loss_and_grad(model, batch);
  const LossGrad stability{ewc_penalty(ewc, model.params), ewc_penalty_grad(ewc, model.params)};
  return combine_and_step(model, opt, alpha, plasticity, stability);
}

// ---------------------------------------------------------------------------
// Learner

Learner::Learner(ModelState model, OptimizerState opt, MethodConfig cfg, int n_tasks,
                 std::uint64_t seed)
    : model_(std::move(model)),
      opt_(std::move(opt)),
      cfg_(cfg),
      n_tasks_(n_tasks),
      seed_(seed),
      replay_rng_(make_rng(seed, "replay-sample")),
      replay_(cfg.buffer_capacity, seed) {
  validate(model_);
  check_alpha(cfg_.alpha);
  if (n_tasks_ < 1) {
    throw Error(ErrorCode::invalid_argument, "learner needs at least one task");
  }
  gem_.margin = cfg_.gem_margin;
  gem_.per_task_size = cfg_.buffer_capacity / static_cast<std::size_t>(n_tasks_);
  lwf_.temperature = cfg_.lwf_temperature;
  ewc_.lambda = cfg_.ewc_lambda;
}

StepResult Learner::step(const Batch& batch) {
  switch (cfg_.kind) {
    case MethodKind::finetune: return finetune_step(model_, opt_, batch);
    case MethodKind::er: return er_step(model_, opt_, batch, replay_, cfg_.alpha, replay_rng_);
    case MethodKind::gem: return gem_step(model_, opt_, batch, gem_);
    case MethodKind::lwf: return lwf_step(model_, opt_, batch, lwf_, cfg_.alpha);
    case MethodKind::ewc: return ewc_step(model_, opt_, batch, ewc_, cfg_.alpha);
  }
  throw Error(ErrorCode::invalid_argument, "unknown method");
}

void Learner::end_task(const TaskSpec& task) {
  switch (cfg_.kind) {
    case MethodKind::finetune:
      break;
    case MethodKind::er:
      for (std::size_t i = 0; i < task.train.size(); ++i) {
        const auto row = task.train.inputs.row(static_cast<Eigen::Index>(i));
        replay_.reservoir_update(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                 task.train.labels[i]);
      }
      break;
    case MethodKind::gem: {
      Rng rng = make_rng(seed_, "gem-memory", static_cast<std::uint64_t>(task.id));
      const std::size_t k = std::min(gem_.per_task_size, task.train.size());
      if (k > 0) {
        const auto idx = subsample_indices(task.train.size(), EvalSubsampleConfig{k, true, EvalSource::train_split}, rng);
        Dataset d = subset(task.train, idx);
        gem_.per_task.push_back(Batch{std::move(d.inputs), std::move(d.labels)});
      }
      break;
    }
    case MethodKind::lwf:
      lwf_.teacher = model_;
      break;
    case MethodKind::ewc: {
      Rng rng = make_rng(seed_, "fisher", static_cast<std::uint64_t>(task.id));
      auto fisher = fisher_estimate(model_, task.train, cfg_.fisher_samples, rng);
      if (cfg_.fisher_mode == FisherMode::accumulate && !ewc_.fisher.empty()) {
        for (std::size_t i = 0; i < fisher.size(); ++i) {
          ewc_.fisher[i] += fisher[i];
        }
      } else {
        ewc_.fisher = std::move(fisher);
      }
      ewc_.anchor = model_;
      break;
    }
  }
}

}  // namespace cleval
