#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "cleval/error.hpp"
#include "cleval/streams.hpp"
#include "helpers.hpp"

using namespace cleval;

TEST_CASE("split stream groups classes sequentially and sets boundaries") {
  SyntheticSpec spec;
  spec.per_class_train = 20;
  spec.per_class_eval = 10;
  const TaskStream s = make_split_synthetic(spec, 0);
  REQUIRE(s.n_tasks() == 5);
  CHECK(s.boundaries == std::vector<long>{500, 1000, 1500, 2000, 2500});
  CHECK(s.total_iters() == 2500);
  CHECK(s.input_dim == 32);
  CHECK(s.n_classes == 10);
  for (int k = 0; k < 5; ++k) {
    const auto& task = s.tasks[static_cast<std::size_t>(k)];
    CHECK(task.id == k + 1);
    CHECK(task.classes == std::vector<int>{2 * k, 2 * k + 1});
    CHECK(task.train.size() == 40);
    CHECK(task.eval.size() == 20);
    for (int y : task.train.labels) {
      CHECK((y == 2 * k || y == 2 * k + 1));
    }
  }
}

TEST_CASE("task_at and is_boundary") {
  const TaskStream s = testing::tiny_stream(3, 10);
  CHECK(s.task_at(1) == 1);
  CHECK(s.task_at(10) == 1);
  CHECK(s.task_at(11) == 2);
  CHECK(s.task_at(30) == 3);
  CHECK(s.is_boundary(10));
  CHECK(s.is_boundary(30));
  CHECK_FALSE(s.is_boundary(11));
  try {
    s.task_at(31);
    FAIL("expected stream_end");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::stream_end);
  }
  CHECK_THROWS_AS(s.task_at(0), Error);
}

TEST_CASE("uneven class splits are rejected") {
  SyntheticSpec spec;
  spec.n_tasks = 3;
  CHECK_THROWS_AS(make_split_synthetic(spec, 0), Error);
}

TEST_CASE("synthetic data is a deterministic function of the seed") {
  SyntheticSpec spec;
  spec.per_class_train = 5;
  spec.per_class_eval = 5;
  const TaskStream a = make_split_synthetic(spec, 3);
  const TaskStream b = make_split_synthetic(spec, 3);
  const TaskStream c = make_split_synthetic(spec, 4);
  CHECK(a.tasks[2].train.inputs == b.tasks[2].train.inputs);
  CHECK(a.tasks[2].train.inputs != c.tasks[2].train.inputs);
}

TEST_CASE("synthetic class means sit at the configured offset and radius") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_tasks = 1;
  spec.dims = 8;
  spec.per_class_train = 20000;
  spec.per_class_eval = 1;
  spec.radius = 3.0;
  spec.shared_offset = 0.0;
  const TaskStream s = make_split_synthetic(spec, 1);
  const auto& d = s.tasks[0].train;
  Eigen::RowVectorXd mean0 = Eigen::RowVectorXd::Zero(8);
  int n0 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] == 0) {
      mean0 += d.inputs.row(static_cast<Eigen::Index>(i));
      ++n0;
    }
  }
  mean0 /= n0;
  // standard error of the norm is about sqrt(8 / 20000) = 0.02
  CHECK(mean0.norm() == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("task permutations: identity for task 1, bijections otherwise") {
  const auto p1 = task_permutation(50, 1, 9);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i] == i);
  }
  for (int k = 2; k <= 6; ++k) {
    auto p = task_permutation(50, k, 9);
    CHECK(p != p1);
    std::sort(p.begin(), p.end());
    CHECK(p == p1);
  }
  CHECK(task_permutation(50, 3, 9) == task_permutation(50, 3, 9));
}

TEST_CASE("permuted stream keeps labels and permutes inputs") {
  const TaskStream base = testing::tiny_stream(1, 5);
  const TaskStream s = make_permuted_stream(base.tasks[0].train, base.tasks[0].eval, 3, 7, 2);
  CHECK(s.scenario == Scenario::domain_incremental);
  CHECK(s.boundaries == std::vector<long>{7, 14, 21});
  const auto perm = task_permutation(static_cast<std::size_t>(s.input_dim), 2, 2);
  const auto& x = s.tasks[1].train.inputs;
  const auto& x0 = base.tasks[0].train.inputs;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      CHECK(x(r, c) == x0(r, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(c)])));
    }
  }
  CHECK(s.tasks[2].train.labels == base.tasks[0].train.labels);
  CHECK(s.tasks[0].classes == s.tasks[2].classes);
}

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx(const std::filesystem::path& dir, std::uint32_t img_magic, std::size_t n, std::size_t pixels_written) {
  std::ofstream img(dir / "img", std::ios::binary);
  put_be32(img, img_magic);
  put_be32(img, static_cast<std::uint32_t>(n));
  put_be32(img, 2);
  put_be32(img, 2);
  for (std::size_t i = 0; i < pixels_written; ++i) {
    img.put(static_cast<char>(i % 256));
  }
  std::ofstream lab(dir / "lab", std::ios::binary);
  put_be32(lab, 0x801);
  put_be32(lab, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    lab.put(static_cast<char>(i % 3));
  }
}

}  // namespace

TEST_CASE("IDX loader reads big-endian files and scales pixels") {
  const auto dir = testing::temp_dir("idx_ok");
  write_idx(dir, 0x803, 3, 12);
  const Dataset d = load_idx(dir / "img", dir / "lab");
  CHECK(d.size() == 3);
  CHECK(d.inputs.cols() == 4);
  CHECK(d.inputs(1, 1) == doctest::Approx(5.0 / 255.0));
  CHECK(d.labels == std::vector<int>{0, 1, 2});
  CHECK(d.n_classes == 3);
}

TEST_CASE("IDX loader reports bad magic, truncation and missing files") {
  const auto dir = testing::temp_dir("idx_bad");
  write_idx(dir, 0x804, 3, 12);
  try {
    load_idx(dir / "img", dir / "lab");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
  }
  write_idx(dir, 0x803, 3, 7);
  try {
    load_idx(dir / "img", dir / "lab");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  try {
    load_idx(dir / "nope", dir / "lab");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}

TEST_CASE("subsample indices are distinct draws without replacement") {
  Rng rng = make_rng(4, "test-subsample");
  std::uniform_int_distribution<std::size_t> size(1, 300);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const auto idx = subsample_indices(n, EvalSubsampleConfig{k, true, EvalSource::eval_split}, rng);
    CHECK(idx.size() == k);
    const std::set<std::size_t> uniq(idx.begin(), idx.end());
    CHECK(uniq.size() == k);
    CHECK(*uniq.rbegin() < n);
  }
  const auto all = subsample_indices(5, EvalSubsampleConfig{std::nullopt, true, EvalSource::eval_split}, rng);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(subsample_indices(5, EvalSubsampleConfig{6, true, EvalSource::eval_split}, rng), Error);
  CHECK_THROWS_AS(subsample_indices(5, EvalSubsampleConfig{0, true, EvalSource::eval_split}, rng), Error);
}

TEST_CASE("subsampling is uniform over the split") {
  // Each index is included with probability k/n = 0.1; over 4000 draws the
  // count is Binomial(4000, 0.1): mean 400, sd 19.
  Rng rng = make_rng(5, "test-uniform");
  std::vector<int> counts(50, 0);
  for (int trial = 0; trial < 4000; ++trial) {
    for (auto i : subsample_indices(50, EvalSubsampleConfig{5, true, EvalSource::eval_split}, rng)) {
      ++counts[i];
    }
  }
  for (int c : counts) {
    CHECK(std::abs(c - 400) < 5 * 19);
  }
}

TEST_CASE("eval sampler reuses or redraws its subsample") {
  const TaskStream s = testing::tiny_stream(2, 5);
  EvalSampler fixed(s.tasks[0], EvalSubsampleConfig{10, false, EvalSource::eval_split}, 1);
  const auto first = fixed.next();
  CHECK(fixed.next() == first);
  EvalSampler fresh(s.tasks[0], EvalSubsampleConfig{10, true, EvalSource::eval_split}, 1);
  CHECK(fresh.next() == first);  // same seed and task, same first draw
  CHECK(fresh.next() != first);
  EvalSampler train(s.tasks[1], EvalSubsampleConfig{10, true, EvalSource::train_split}, 1);
  CHECK(&train.source() == &s.tasks[1].train);
  CHECK_THROWS_AS(EvalSampler(s.tasks[0], EvalSubsampleConfig{1000, true, EvalSource::eval_split}, 1), Error);
}

TEST_CASE("next_batch draws from the active task only") {
  const TaskStream s = testing::tiny_stream(2, 5);
  Rng rng = make_rng(6, "test-batch");
  for (long t = 1; t <= 10; ++t) {
    const auto sb = next_batch(s, t, 16, rng);
    CHECK(sb.task == s.task_at(t));
    CHECK(sb.batch.inputs.rows() == 16);
    const auto& classes = s.tasks[static_cast<std::size_t>(sb.task - 1)].classes;
    for (int y : sb.batch.labels) {
      CHECK(std::find(classes.begin(), classes.end(), y) != classes.end());
    }
  }
  CHECK_THROWS_AS(next_batch(s, 11, 16, rng), Error);
}
