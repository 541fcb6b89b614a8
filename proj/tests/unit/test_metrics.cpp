#include <doctest.h>

#include <algorithm>

#include "cleval/error.hpp"
#include "cleval/metrics.hpp"
#include "cleval/oracles.hpp"
#include "helpers.hpp"

using namespace cleval;

namespace {

WindowedMetrics stream(const std::vector<double>& trace, int w) {
  WindowTracker t(w);
  for (double a : trace) {
    t.push(a);
  }
  return {t.wf(), t.wp()};
}

}  // namespace

TEST_CASE("worst in-window drop and rise on a hand-checked trace") {
  const std::vector<double> trace{0.9, 0.5, 0.7, 0.2, 0.8};
  // w = 2: consecutive pairs only; largest drop 0.7 -> 0.2, largest rise 0.2 -> 0.8
  CHECK(stream(trace, 2).wf == doctest::Approx(0.5));
  CHECK(stream(trace, 2).wp == doctest::Approx(0.6));
  CHECK(stream(trace, 3).wf == doctest::Approx(0.5));
  // w = 4 reaches 0.9 -> 0.2
  CHECK(stream(trace, 4).wf == doctest::Approx(0.7));
  CHECK(stream(trace, 4).wp == doctest::Approx(0.6));
}

TEST_CASE("monotone and constant traces") {
  CHECK(stream({0.1, 0.2, 0.3}, 10).wf == 0.0);
  CHECK(stream({0.1, 0.2, 0.3}, 10).wp == doctest::Approx(0.2));
  CHECK(stream({0.4, 0.4, 0.4}, 2).wf == 0.0);
  CHECK(stream({0.4, 0.4, 0.4}, 2).wp == 0.0);
  CHECK(stream({0.4}, 2).wf == 0.0);
  CHECK_THROWS_AS(WindowTracker(1), Error);
}

TEST_CASE("streaming windows equal brute force on random traces") {
  Rng rng = make_rng(21, "test-windows");
  std::uniform_int_distribution<int> len(1, 300);
  std::uniform_int_distribution<int> win(2, 40);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> trace(static_cast<std::size_t>(len(rng)));
    const bool quantized = trial % 2 == 0;
    for (double& a : trace) {
      a = quantized ? level(rng) / 4.0 : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
    const int w = win(rng);
    WindowTracker t(w);
    for (double a : trace) {
      t.push(a);
      CHECK(t.max_deque_size() <= static_cast<std::size_t>(w));
    }
    const auto brute = oracle_wf_wp(trace, w);
    CHECK(std::abs(t.wf() - brute.wf) <= 1e-12);
    CHECK(std::abs(t.wp() - brute.wp) <= 1e-12);
  }
}

TEST_CASE("oracle suite for windows and min-ACC passes") {
  const auto r = oracle::check_metrics(5, 300);
  CHECK(r.cases == 300);
  CHECK(r.passed());
}

TEST_CASE("min-ACC counts evaluations after the task is learned") {
  MetricState s({10}, MinAccRange::post_learned);
  s.add_task(1, 0);
  s.update({5, 1, 0.3, 100});
  s.update({10, 1, 0.9, 100});
  s.mark_learned(1, 10, 0.9);
  CHECK_FALSE(min_acc(s, 1).has_value());
  s.add_task(2, 10);
  CHECK_FALSE(min_acc(s, 2).has_value());
  s.update({11, 1, 0.5, 100});
  s.update({12, 1, 0.7, 100});
  REQUIRE(min_acc(s, 2).has_value());
  CHECK(*min_acc(s, 2) == doctest::Approx(0.5));
}

TEST_CASE("literal range also counts the task's own training period") {
  MetricState s({10}, MinAccRange::eq2_literal);
  s.add_task(1, 0);
  s.update({5, 1, 0.3, 100});
  s.update({10, 1, 0.9, 100});
  s.mark_learned(1, 10, 0.9);
  s.add_task(2, 10);
  s.update({11, 1, 0.5, 100});
  CHECK(*min_acc(s, 2) == doctest::Approx(0.3));
}

TEST_CASE("WC-ACC combination") {
  CHECK(wc_acc(0.8, std::nullopt, 1) == 0.8);
  CHECK(wc_acc(0.8, 0.1, 1) == 0.8);
  CHECK(wc_acc(0.9, 0.6, 3) == doctest::Approx(0.9 / 3 + 0.6 * 2 / 3));
  CHECK_THROWS_AS(wc_acc(0.5, 0.5, 0), Error);
}

TEST_CASE("ACC and FORG at a boundary") {
  MetricState s;
  s.add_task(1, 0);
  s.mark_learned(1, 10, 0.9);
  s.add_task(2, 10);
  s.mark_learned(2, 20, 0.8);
  s.add_task(3, 20);
  const std::vector<double> fresh{0.5, 0.6, 0.95};
  CHECK(acc_final(3, fresh) == doctest::Approx((0.5 + 0.6 + 0.95) / 3));
  CHECK(*forg(s, 3, fresh) == doctest::Approx(((0.9 - 0.5) + (0.8 - 0.6)) / 2));
  CHECK_FALSE(forg(s, 1, fresh).has_value());
  // backward transfer gives negative forgetting
  CHECK(*forg(s, 2, std::vector<double>{0.95, 0.8}) == doctest::Approx(-0.05));
  CHECK_THROWS_AS(acc_final(3, std::vector<double>{0.5}), Error);
}

TEST_CASE("WC-ACC never exceeds ACC at boundaries (random streams)") {
  Rng rng = make_rng(22, "test-wc-bound");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_tasks = 1 + trial % 6;
    const long per_task = 1 + static_cast<long>(u(rng) * 30);
    MetricState s({2, 10}, trial % 2 ? MinAccRange::eq2_literal : MinAccRange::post_learned);
    long t = 0;
    for (int k = 1; k <= n_tasks; ++k) {
      s.add_task(k, t);
      for (long i = 0; i < per_task; ++i) {
        ++t;
        const bool boundary = i + 1 == per_task;
        std::vector<double> accs;
        for (int e = 1; e <= k; ++e) {
          accs.push_back(u(rng));
          s.update({t, e, accs.back(), 10});
        }
        if (boundary) {
          s.mark_learned(k, t, accs.back());
          const double acc = acc_final(k, accs);
          const double wc = wc_acc(accs.back(), min_acc(s, k), k);
          CHECK(wc <= acc + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("windowed metrics average over evaluation tasks") {
  MetricState s({2});
  s.add_task(1, 0);
  s.update({1, 1, 0.8, 1});
  s.update({2, 1, 0.2, 1});
  s.add_task(2, 2);
  s.update({3, 1, 0.2, 1});
  s.update({3, 2, 0.1, 1});
  s.update({4, 2, 0.5, 1});
  const auto m = aggregate_wf_wp(s, 2);
  CHECK(m.wf == doctest::Approx((0.6 + 0.0) / 2));
  CHECK(m.wp == doctest::Approx((0.0 + 0.4) / 2));
  CHECK_THROWS_AS(aggregate_wf_wp(s, 7), Error);
}

TEST_CASE("metric state rejects out-of-order input") {
  MetricState s;
  CHECK_THROWS_AS(s.add_task(2, 0), Error);
  s.add_task(1, 0);
  s.update({3, 1, 0.5, 1});
  try {
    s.update({3, 1, 0.5, 1});
    FAIL("expected ordering error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ordering);
  }
  CHECK_THROWS_AS(s.update({4, 1, 1.5, 1}), Error);
  CHECK_THROWS_AS(s.update({4, 2, 0.5, 1}), Error);
  CHECK_THROWS_AS(MetricState({1}), Error);
}

TEST_CASE("report snapshots the current-task accuracy and windows") {
  MetricState s({2, 3});
  s.add_task(1, 0);
  CHECK_THROWS_AS(make_report(s, 1, 1), Error);
  s.update({1, 1, 0.4, 1});
  s.update({2, 1, 0.9, 1});
  const auto r = make_report(s, 2, 1);
  CHECK(r.acc_current == 0.9);
  CHECK(r.wc_acc == 0.9);
  CHECK_FALSE(r.min_acc.has_value());
  REQUIRE(r.wp.size() == 2);
  CHECK(r.wp[0] == doctest::Approx(0.5));
  CHECK(r.wp[1] == doctest::Approx(0.5));
}
