#include "cleval/nn.hpp"

#include <cmath>
#include <string>

#include "cleval/error.hpp"
#include "cleval/rng.hpp"

namespace cleval {

namespace {

using MatrixMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<const Eigen::RowVectorXd>;

struct LayerOffsets {
  std::size_t weights;
  std::size_t biases;
};

std::vector<LayerOffsets> layer_offsets(std::span<const LayerShape> shapes) {
  std::vector<LayerOffsets> out;
  out.reserve(shapes.size());
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    const auto w = static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim);
    out.push_back({offset, offset + w});
    offset += w + static_cast<std::size_t>(s.out_dim);
  }
  return out;
}

void check_inputs(const ModelState& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    throw Error(ErrorCode::dimension, "input dimension mismatch: expected " +
                                          std::to_string(model.input_dim()) + ", got " +
                                          std::to_string(inputs.cols()));
  }
  if (inputs.rows() < 1) {
    throw Error(ErrorCode::dimension, "empty input batch");
  }
}

void check_labels(const ModelState& model, const Batch& batch) {
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.inputs.rows()) {
    throw Error(ErrorCode::dimension,
                "label count " + std::to_string(batch.labels.size()) +
                    " does not match batch rows " + std::to_string(batch.inputs.rows()));
  }
  for (int y : batch.labels) {
    if (y < 0 || y >= model.output_dim()) {
      throw Error(ErrorCode::invalid_argument,
                  "label " + std::to_string(y) + " outside [0, " +
                      std::to_string(model.output_dim()) + ")");
    }
  }
}

void check_finite_logits(const Matrix& logits) {
  if (!logits.allFinite()) {
    throw Error(ErrorCode::numeric, "non-finite logits");
  }
}

// Row-wise log-softmax of logits / temperature.
Matrix log_softmax(const Matrix& logits, double temperature) {
  Matrix scaled = logits / temperature;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    auto row = scaled.row(r);
    const double m = row.maxCoeff();
    row.array() -= m;
    const double lse = std::log(row.array().exp().sum());
    row.array() -= lse;
  }
  return scaled;
}

}  // namespace

std::size_t param_count(std::span<const LayerShape> shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) {
    n += static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim) +
         static_cast<std::size_t>(s.out_dim);
  }
  return n;
}

void validate(const ModelState& model) {
  if (model.shapes.empty()) {
    throw Error(ErrorCode::invalid_argument, "model has no layers");
  }
  for (std::size_t i = 0; i < model.shapes.size(); ++i) {
    const auto& s = model.shapes[i];
    if (s.in_dim < 1 || s.out_dim < 1) {
      throw Error(ErrorCode::invalid_argument,
                  "layer " + std::to_string(i) + " has a non-positive dimension");
    }
    if (i > 0 && model.shapes[i - 1].out_dim != s.in_dim) {
      throw Error(ErrorCode::dimension, "layer " + std::to_string(i) + " expects in_dim " +
                                            std::to_string(model.shapes[i - 1].out_dim) +
                                            ", got " + std::to_string(s.in_dim));
    }
  }
  if (model.shapes.back().activation != Activation::identity) {
    throw Error(ErrorCode::invalid_argument, "final layer must emit identity logits");
  }
  const auto expected = param_count(model.shapes);
  if (model.params.size() != expected) {
    throw Error(ErrorCode::dimension, "parameter vector has " +
                                          std::to_string(model.params.size()) +
                                          " entries, shapes require " + std::to_string(expected));
  }
  if (!all_finite(model.params)) {
    throw Error(ErrorCode::numeric, "non-finite parameter");
  }
}

ModelState make_model(std::vector<LayerShape> shapes) {
  ModelState model{std::move(shapes), {}};
  model.params.assign(param_count(model.shapes), 0.0);
  validate(model);
  return model;
}

ModelState make_mlp(int input_dim, std::span<const int> hidden, int n_outputs,
                    std::uint64_t seed) {
  std::vector<LayerShape> shapes;
  int in = input_dim;
  for (int h : hidden) {
    shapes.push_back({in, h, Activation::relu});
    in = h;
  }
  shapes.push_back({in, n_outputs, Activation::identity});
  ModelState model = make_model(std::move(shapes));

  Rng rng = make_rng(seed, "init");
  const auto offsets = layer_offsets(model.shapes);
  for (std::size_t l = 0; l < model.shapes.size(); ++l) {
    const auto& s = model.shapes[l];
    const double bound = std::sqrt(6.0 / s.in_dim);
    std::uniform_real_distribution<double> dist(-bound, bound);
    const auto n = static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim);
    for (std::size_t i = 0; i < n; ++i) {
      model.params[offsets[l].weights + i] = dist(rng);
    }
  }
  return model;
}

ForwardCache forward_cached(const ModelState& model, const Matrix& inputs) {
  check_inputs(model, inputs);
  const auto offsets = layer_offsets(model.shapes);
  ForwardCache cache;
  cache.activations.reserve(model.shapes.size() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < model.shapes.size(); ++l) {
    const auto& s = model.shapes[l];
    MatrixMap w(model.params.data() + offsets[l].weights, s.in_dim, s.out_dim);
    RowMap b(model.params.data() + offsets[l].biases, s.out_dim);
    Matrix z = cache.activations.back() * w;
    z.rowwise() += b;
    if (s.activation == Activation::relu) {
      z = z.cwiseMax(0.0);
    }
    cache.activations.push_back(std::move(z));
  }
  check_finite_logits(cache.activations.back());
  return cache;
}

Matrix forward(const ModelState& model, const Matrix& inputs) {
  return std::move(forward_cached(model, inputs).activations.back());
}

Matrix softmax(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "temperature must be positive");
  }
  return log_softmax(logits, temperature).array().exp().matrix();
}

Gradient backward(const ModelState& model, const ForwardCache& cache,
                  const Matrix& dlogits) {
  const auto offsets = layer_offsets(model.shapes);
  Gradient grad{std::vector<double>(model.params.size(), 0.0)};
  Matrix dz = dlogits;
  for (std::size_t l = model.shapes.size(); l-- > 0;) {
    const auto& s = model.shapes[l];
    const Matrix& a_prev = cache.activations[l];
    Eigen::Map<Matrix> dw(grad.values.data() + offsets[l].weights, s.in_dim, s.out_dim);
    Eigen::Map<Eigen::RowVectorXd> db(grad.values.data() + offsets[l].biases, s.out_dim);
    // Evaluate into owned storage first: writing straight into the vector lets
    // its heap alignment pick the vectorized peel and change the rounding.
    const Matrix dw_val = a_prev.transpose() * dz;
    const Eigen::RowVectorXd db_val = dz.colwise().sum();
    dw = dw_val;
    db = db_val;
    if (l > 0) {
      MatrixMap w(model.params.data() + offsets[l].weights, s.in_dim, s.out_dim);
      Matrix da = dz * w.transpose();
      if (model.shapes[l - 1].activation == Activation::relu) {
        da = da.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
      }
      dz = std::move(da);
    }
  }
  return grad;
}

std::vector<double> squared_sample_gradient_sum(const ModelState& model,
                                                const ForwardCache& cache,
                                                const Matrix& dlogits) {
  // Per-sample weight gradient is the outer product a_b dz_b^T, so its square
  // is the outer product of the squares.
  const auto offsets = layer_offsets(model.shapes);
  std::vector<double> out(model.params.size(), 0.0);
  Matrix dz = dlogits;
  for (std::size_t l = model.shapes.size(); l-- > 0;) {
    const auto& s = model.shapes[l];
    const Matrix& a_prev = cache.activations[l];
    Eigen::Map<Matrix> dw(out.data() + offsets[l].weights, s.in_dim, s.out_dim);
    Eigen::Map<Eigen::RowVectorXd> db(out.data() + offsets[l].biases, s.out_dim);
    const Matrix dz_sq = dz.cwiseAbs2();
    const Matrix dw_val = a_prev.cwiseAbs2().transpose() * dz_sq;
    const Eigen::RowVectorXd db_val = dz_sq.colwise().sum();
    dw = dw_val;
    db = db_val;
    if (l > 0) {
      MatrixMap w(model.params.data() + offsets[l].weights, s.in_dim, s.out_dim);
      Matrix da = dz * w.transpose();
      if (model.shapes[l - 1].activation == Activation::relu) {
        da = da.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
      }
      dz = std::move(da);
    }
  }
  return out;
}

double loss_value(const ModelState& model, const Batch& batch) {
  check_labels(model, batch);
  const Matrix logp = log_softmax(forward(model, batch.inputs), 1.0);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < logp.rows(); ++r) {
    sum -= logp(r, batch.labels[static_cast<std::size_t>(r)]);
  }
  return sum / static_cast<double>(logp.rows());
}

LossGrad loss_and_grad(const ModelState& model, const Batch& batch) {
  check_labels(model, batch);
  const ForwardCache cache = forward_cached(model, batch.inputs);
  const Matrix logp = log_softmax(cache.activations.back(), 1.0);
  const auto n = static_cast<double>(logp.rows());
  Matrix dlogits = logp.array().exp().matrix();
  double sum = 0.0;
  for (Eigen::Index r = 0; r < logp.rows(); ++r) {
    const int y = batch.labels[static_cast<std::size_t>(r)];
    sum -= logp(r, y);
    dlogits(r, y) -= 1.0;
  }
  dlogits /= n;
  return {sum / n, backward(model, cache, dlogits)};
}

namespace {

void check_distill(const ModelState& student, const ModelState& teacher, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "temperature must be positive");
  }
  if (student.output_dim() != teacher.output_dim()) {
    throw Error(ErrorCode::dimension, "student has " + std::to_string(student.output_dim()) +
                                          " outputs, teacher " +
                                          std::to_string(teacher.output_dim()));
  }
}

}  // namespace

double distill_loss_value(const ModelState& student, const ModelState& teacher,
                          const Matrix& inputs, double temperature) {
  check_distill(student, teacher, temperature);
  const Matrix target = softmax(forward(teacher, inputs), temperature);
  const Matrix logp = log_softmax(forward(student, inputs), temperature);
  return -(target.array() * logp.array()).sum() / static_cast<double>(inputs.rows());
}

LossGrad distill_loss_and_grad(const ModelState& student, const ModelState& teacher,
                               const Matrix& inputs, double temperature) {
  check_distill(student, teacher, temperature);
  const Matrix target = softmax(forward(teacher, inputs), temperature);
  const ForwardCache cache = forward_cached(student, inputs);
  const Matrix logp = log_softmax(cache.activations.back(), temperature);
  const auto n = static_cast<double>(inputs.rows());
  const double loss = -(target.array() * logp.array()).sum() / n;
  const Matrix dlogits = (logp.array().exp() - target.array()).matrix() / (n * temperature);
  return {loss, backward(student, cache, dlogits)};
}

OptimizerState make_optimizer(const ModelState& model, double lr, double momentum) {
  if (!(lr > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "momentum must lie in [0, 1)");
  }
  return {lr, momentum, std::vector<double>(model.params.size(), 0.0)};
}

void sgd_step(ModelState& model, OptimizerState& opt, const Gradient& grad) {
  const auto n = model.params.size();
  if (grad.values.size() != n || opt.velocity.size() != n) {
    throw Error(ErrorCode::dimension, "gradient/velocity length does not match parameters");
  }
  if (!all_finite(grad.values)) {
    throw Error(ErrorCode::numeric, "non-finite gradient");
  }
  for (std::size_t i = 0; i < n; ++i) {
    opt.velocity[i] = opt.momentum * opt.velocity[i] + grad.values[i];
    model.params[i] -= opt.lr * opt.velocity[i];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension, "dot of vectors with different lengths");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

Gradient weighted_sum(double a, const Gradient& x, double b, const Gradient& y) {
  if (x.values.size() != y.values.size()) {
    throw Error(ErrorCode::dimension, "gradient lengths differ");
  }
  Gradient out{std::vector<double>(x.values.size())};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = a * x.values[i] + b * y.values[i];
  }
  return out;
}

}  // namespace cleval
