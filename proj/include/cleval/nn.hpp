#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cleval {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, identity };

struct LayerShape {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::identity;
};

/// Dense feed-forward classifier. Parameters are one flat vector: for each
/// layer the in_dim x out_dim row-major weight block followed by the out_dim
/// biases. The last layer emits logits.
struct ModelState {
  std::vector<LayerShape> shapes;
  std::vector<double> params;

  int input_dim() const { return shapes.front().in_dim; }
  int output_dim() const { return shapes.back().out_dim; }
};

struct Gradient {
  std::vector<double> values;
};

struct OptimizerState {
  double lr = 0.01;
  double momentum = 0.9;
  std::vector<double> velocity;
};

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

struct LossGrad {
  double loss = 0.0;
  Gradient grad;
};

std::size_t param_count(std::span<const LayerShape> shapes);

/// Throws if the shapes are malformed or the parameter vector does not match.
void validate(const ModelState& model);

/// All-zero parameters.
ModelState make_model(std::vector<LayerShape> shapes);

/// ReLU MLP with identity output layer, Kaiming-uniform weights
/// (bound sqrt(6 / in_dim)) and zero biases, drawn from the "init" stream of
/// `seed`.
ModelState make_mlp(int input_dim, std::span<const int> hidden, int n_outputs,
                    std::uint64_t seed);

Matrix forward(const ModelState& model, const Matrix& inputs);

/// Row-wise softmax of logits / temperature, max-shifted.
Matrix softmax(const Matrix& logits, double temperature = 1.0);

/// Layer activations kept for backpropagation; activations.front() is the
/// input and activations.back() the logits.
struct ForwardCache {
  std::vector<Matrix> activations;
};

ForwardCache forward_cached(const ModelState& model, const Matrix& inputs);

/// Gradient of sum_b <dlogits_b, logits_b> w.r.t. the parameters.
Gradient backward(const ModelState& model, const ForwardCache& cache,
                  const Matrix& dlogits);

/// sum_b (d/dtheta <dlogits_b, logits_b>)^2, i.e. summed squared per-sample
/// gradients, without materialising the per-sample gradients.
std::vector<double> squared_sample_gradient_sum(const ModelState& model,
                                                const ForwardCache& cache,
                                                const Matrix& dlogits);

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelState& model, const Batch& batch);
double loss_value(const ModelState& model, const Batch& batch);

/// Cross-entropy between the temperature-softened teacher and student
/// distributions, averaged over the batch. The gradient is w.r.t. the student.
LossGrad distill_loss_and_grad(const ModelState& student, const ModelState& teacher,
                               const Matrix& inputs, double temperature);
double distill_loss_value(const ModelState& student, const ModelState& teacher,
                          const Matrix& inputs, double temperature);

OptimizerState make_optimizer(const ModelState& model, double lr, double momentum);

/// Classical momentum: v <- momentum * v + g; theta <- theta - lr * v.
/// A non-finite gradient throws and leaves both states untouched.
void sgd_step(ModelState& model, OptimizerState& opt, const Gradient& grad);

// Flat-vector helpers shared by the continual-learning methods.
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);
/// out = a * x + b * y
Gradient weighted_sum(double a, const Gradient& x, double b, const Gradient& y);

}  // namespace cleval
