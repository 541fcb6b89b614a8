#include <doctest.h>

#include <cmath>
#include <limits>

#include "cleval/error.hpp"
#include "cleval/nn.hpp"
#include "cleval/oracles.hpp"
#include "helpers.hpp"

using namespace cleval;

TEST_CASE("parameter count of the 784-400-400-10 classifier") {
  const std::vector<LayerShape> shapes{
      {784, 400, Activation::relu}, {400, 400, Activation::relu}, {400, 10, Activation::identity}};
  CHECK(param_count(shapes) == 784 * 400 + 400 + 400 * 400 + 400 + 400 * 10 + 10);
}

TEST_CASE("validate rejects mismatched shapes and parameter vectors") {
  ModelState m = make_model({{3, 4, Activation::relu}, {4, 2, Activation::identity}});
  CHECK_NOTHROW(validate(m));
  m.params.pop_back();
  CHECK_THROWS_AS(validate(m), Error);
  CHECK_THROWS_AS(make_model({{3, 4, Activation::relu}, {5, 2, Activation::identity}}), Error);
}

TEST_CASE("mlp initialisation is seeded, bounded and has zero biases") {
  const std::vector<int> hidden{7};
  const ModelState a = make_mlp(5, hidden, 3, 42);
  const ModelState b = make_mlp(5, hidden, 3, 42);
  const ModelState c = make_mlp(5, hidden, 3, 43);
  CHECK(a.params == b.params);
  CHECK(a.params != c.params);
  // layer 1: 5x7 weights then 7 biases
  for (int i = 0; i < 35; ++i) {
    CHECK(std::abs(a.params[i]) <= std::sqrt(6.0 / 5.0));
  }
  for (int i = 35; i < 42; ++i) {
    CHECK(a.params[i] == 0.0);
  }
}

TEST_CASE("vectorised forward equals the scalar-loop oracle on random shapes") {
  Rng rng = make_rng(1, "test-forward");
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const int in = dim(rng);
    std::vector<int> hidden(static_cast<std::size_t>(dim(rng) % 3));
    for (int& h : hidden) {
      h = dim(rng);
    }
    ModelState m = make_mlp(in, hidden, dim(rng) + 1, trial);
    for (double& p : m.params) {
      p += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    const Matrix x = testing::random_matrix(rng, dim(rng), in);
    const Matrix fast = forward(m, x);
    const Matrix slow = oracle::naive_forward(m, x);
    REQUIRE(fast.rows() == slow.rows());
    CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("forward rejects wrong input width and empty batches") {
  const ModelState m = make_model({{3, 2, Activation::identity}});
  CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 4)), Error);
  CHECK_THROWS_AS(forward(m, Matrix(0, 3)), Error);
}

TEST_CASE("softmax rows are distributions and shift invariant") {
  Rng rng = make_rng(2, "test-softmax");
  const Matrix z = testing::random_matrix(rng, 5, 4, 10.0);
  for (double temp : {0.5, 1.0, 2.0}) {
    const Matrix p = softmax(z, temp);
    const Matrix q = softmax((z.array() + 123.0).matrix(), temp);
    for (int r = 0; r < 5; ++r) {
      CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(p.row(r).minCoeff() >= 0.0);
    }
    CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(softmax(z, 0.0), Error);
  // huge logits do not overflow
  Matrix big(1, 2);
  big << 1e300, 0.0;
  const Matrix pb = softmax(big);
  CHECK(pb(0, 0) == 1.0);
  CHECK(pb(0, 1) == 0.0);
}

TEST_CASE("cross-entropy of all-zero logits is log(C)") {
  const ModelState m = make_model({{4, 10, Activation::identity}});
  Rng rng = make_rng(3, "test-ce");
  const Batch b = testing::random_batch(rng, 8, 4, 10);
  CHECK(loss_value(m, b) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  const LossGrad lg = loss_and_grad(m, b);
  CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));
}

TEST_CASE("loss and gradient reject labels outside the head") {
  const ModelState m = make_model({{2, 3, Activation::identity}});
  Batch b;
  b.inputs = Matrix::Zero(1, 2);
  b.labels = {3};
  CHECK_THROWS_AS(loss_and_grad(m, b), Error);
  b.labels = {-1};
  CHECK_THROWS_AS(loss_value(m, b), Error);
}

namespace {

ModelState perturbed_net(std::uint64_t seed) {
  const std::vector<int> hidden{8, 6};
  ModelState m = make_mlp(4, hidden, 3, seed);
  Rng rng = make_rng(seed, "perturb");
  for (double& p : m.params) {
    p += 0.2 * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return m;
}

std::vector<std::size_t> all_coords(const ModelState& m) {
  std::vector<std::size_t> c(m.params.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = i;
  }
  return c;
}

}  // namespace

TEST_CASE("cross-entropy gradient matches central differences") {
  const ModelState m = perturbed_net(5);
  Rng rng = make_rng(5, "batch");
  Batch b = testing::random_batch(rng, 9, 4, 3);
  b.inputs = oracle::kink_free_inputs(m, rng, 9, 0.05);
  const auto coords = all_coords(m);
  const auto fd = oracle::central_differences(
      [&](std::span<const double> x) {
        ModelState t = m;
        t.params.assign(x.begin(), x.end());
        return loss_value(t, b);
      },
      m.params, coords, 1e-3);
  const auto g = loss_and_grad(m, b).grad.values;
  REQUIRE(coords.size() >= 100);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    CHECK(oracle::relative_error(g[i], fd[i], 1e-6) < 1e-6);
  }
}

TEST_CASE("distillation gradient matches central differences and vanishes at the teacher") {
  const ModelState student = perturbed_net(6);
  const ModelState teacher = perturbed_net(7);
  Rng rng = make_rng(6, "inputs");
  const Matrix x = oracle::kink_free_inputs(student, rng, 8, 0.05);
  const auto coords = all_coords(student);
  for (double temp : {1.0, 2.0, 4.0}) {
    const auto fd = oracle::central_differences(
        [&](std::span<const double> p) {
          ModelState t = student;
          t.params.assign(p.begin(), p.end());
          return distill_loss_value(t, teacher, x, temp);
        },
        student.params, coords, 1e-3);
    const auto g = distill_loss_and_grad(student, teacher, x, temp).grad.values;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      CHECK(oracle::relative_error(g[i], fd[i], 1e-6) < 1e-6);
    }
  }
  const auto self = distill_loss_and_grad(student, student, x, 2.0).grad.values;
  CHECK(l2_norm(self) == 0.0);
  CHECK_THROWS_AS(distill_loss_and_grad(student, teacher, x, 0.0), Error);
}

TEST_CASE("squared per-sample gradient sum equals the per-sample loop") {
  const ModelState m = perturbed_net(8);
  Rng rng = make_rng(8, "fisher-oracle");
  const Matrix x = testing::random_matrix(rng, 6, 4);
  const ForwardCache cache = forward_cached(m, x);
  const Matrix dl = testing::random_matrix(rng, 6, 3);
  const auto fast = squared_sample_gradient_sum(m, cache, dl);
  std::vector<double> slow(m.params.size(), 0.0);
  for (int r = 0; r < 6; ++r) {
    const Matrix xr = x.row(r);
    const Gradient g = backward(m, forward_cached(m, xr), dl.row(r));
    for (std::size_t i = 0; i < slow.size(); ++i) {
      slow[i] += g.values[i] * g.values[i];
    }
  }
  for (std::size_t i = 0; i < slow.size(); ++i) {
    CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("sgd with momentum follows v = m v + g, theta -= lr v") {
  ModelState m = make_model({{1, 1, Activation::identity}});
  m.params = {1.0, -1.0};
  OptimizerState opt = make_optimizer(m, 0.1, 0.5);
  const Gradient g{{2.0, 4.0}};
  sgd_step(m, opt, g);
  CHECK(m.params[0] == doctest::Approx(0.8));
  CHECK(m.params[1] == doctest::Approx(-1.4));
  sgd_step(m, opt, g);
  // v = 0.5 * 2 + 2 = 3, 0.5 * 4 + 4 = 6
  CHECK(m.params[0] == doctest::Approx(0.5));
  CHECK(m.params[1] == doctest::Approx(-2.0));
}

TEST_CASE("optimizer validation and non-finite gradients") {
  ModelState m = make_model({{1, 1, Activation::identity}});
  CHECK_THROWS_AS(make_optimizer(m, 0.0, 0.0), Error);
  CHECK_THROWS_AS(make_optimizer(m, 0.1, 1.0), Error);
  OptimizerState opt = make_optimizer(m, 0.1, 0.0);
  m.params = {1.0, 2.0};
  const Gradient bad{{std::numeric_limits<double>::quiet_NaN(), 0.0}};
  try {
    sgd_step(m, opt, bad);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numeric);
  }
  CHECK(m.params == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(sgd_step(m, opt, Gradient{{1.0}}), Error);
}

TEST_CASE("weighted_sum, dot and norm") {
  const Gradient x{{1.0, 2.0}};
  const Gradient y{{3.0, -1.0}};
  CHECK(weighted_sum(0.25, x, 0.75, y).values == std::vector<double>{2.5, -0.25});
  CHECK(dot(x.values, y.values) == 1.0);
  CHECK(l2_norm(y.values) == doctest::Approx(std::sqrt(10.0)));
  CHECK_FALSE(all_finite(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}));
}
