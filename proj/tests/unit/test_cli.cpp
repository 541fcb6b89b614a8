#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cleval/cli/config.hpp"
#include "cleval/cli/csv.hpp"
#include "cleval/cli/experiment.hpp"
#include "cleval/cli/plot.hpp"
#include "helpers.hpp"

using namespace cleval;
using namespace cleval::cli;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& out) {
  RunConfig c;
  c.n_tasks = 2;
  c.iters_per_task = 10;
  c.batch_size = 8;
  c.hidden = {8};
  c.lr = 0.05;
  c.eval_subsample = 20;
  c.window_sizes = {2, 5};
  c.synthetic_dims = 6;
  c.synthetic_classes = 4;
  c.synthetic_train_per_class = 30;
  c.synthetic_eval_per_class = 25;
  c.seeds = {0, 1};
  c.output_dir = out;
  return c;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing: defaults, comments, lists") {
  const auto p = parse_config(
      "# ER with a small buffer\n"
      "method = er\n"
      "alpha = 0.3   # replay weight\n"
      "\n"
      "buffer_capacity = 200\n"
      "hidden = 100, 100\n"
      "seeds = 0,1, 2\n"
      "eval_subsample = all\n");
  const RunConfig& c = p.config;
  CHECK(c.method == MethodKind::er);
  CHECK(c.alpha == 0.3);
  CHECK(c.buffer_capacity == 200);
  CHECK(c.hidden == std::vector<int>{100, 100});
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK_FALSE(c.eval_subsample.has_value());
  CHECK(c.n_tasks == 5);
  CHECK(p.warnings.empty());
}

TEST_CASE("shipped example configs parse cleanly") {
  const fs::path dir = fs::path(CLEVAL_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".cfg") {
      const auto p = load_config(entry.path().string());
      CHECK(p.warnings.empty());
      ++n;
    } else if (entry.path().extension() == ".grid") {
      CHECK_FALSE(grid_cells(parse_grid(read_text(entry.path().string()))).empty());
    }
  }
  CHECK(n >= 2);
}

TEST_CASE("config errors name the line") {
  CHECK(error_message([] { parse_config("method = er\nbogus_key = 3\n"); }).find("line 2") == 0);
  CHECK(error_message([] { parse_config("alpha = 1.5\n"); }).find("line 1") == 0);
  CHECK(error_message([] { parse_config("lr = fast\n"); }).find("line 1") == 0);
  CHECK(error_message([] { parse_config("\n\nmethod\n"); }).find("line 3") == 0);
  CHECK(error_message([] { parse_config("lr = 0.1\nlr = 0.2\n"); }).find("line 2") == 0);
  CHECK_THROWS_AS(parse_config("method = sgd\n"), Error);
  CHECK_THROWS_AS(parse_config("window_sizes = 1\n"), Error);
  CHECK_THROWS_AS(parse_config("n_tasks = 3\n"), Error);  // 10 classes do not split into 3
}

TEST_CASE("settings that the method ignores produce warnings") {
  const auto p = parse_config("method = finetune\nbuffer_capacity = 50\nlwf_temperature = 3\n");
  CHECK(p.warnings.size() == 2);
  CHECK(parse_config("method = lwf\nlwf_temperature = 3\n").warnings.empty());
}

TEST_CASE("to_text round-trips every key") {
  RunConfig c = tiny_config("somewhere");
  c.method = MethodKind::ewc;
  c.fisher_mode = FisherMode::latest;
  c.eval_subsample.reset();
  c.minacc_range = MinAccRange::eq2_literal;
  c.lr = 0.1 + 0.2;  // not exactly representable in short form
  const std::string text = to_text(c);
  const auto back = parse_config(text);
  CHECK(to_text(back.config) == text);
  CHECK(back.config.lr == c.lr);
  CHECK_FALSE(back.config.eval_subsample.has_value());
  for (const auto& key : config_keys()) {
    CHECK(text.find(key + " = ") != std::string::npos);
  }
}

TEST_CASE("csv round trip is byte identical") {
  Rng rng = make_rng(1, "csv");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricsRow> rows;
  for (int i = 0; i < 50; ++i) {
    MetricsRow r;
    r.run_seed = static_cast<std::uint64_t>(i % 3);
    r.t = i + 1;
    r.current_task = 1 + i / 20;
    r.acc_current = u(rng);
    if (i % 2 == 0) {
      r.min_acc = u(rng);
    }
    r.wc_acc = u(rng) / 3.0;
    r.wf = {u(rng), 1e-300};
    r.wp = {0.0, u(rng) * 1e10};
    rows.push_back(r);
  }
  const std::vector<int> windows{10, 100};
  const std::string text = metrics_csv(rows, windows);
  std::vector<int> parsed_windows;
  const auto back = parse_metrics(text, &parsed_windows);
  CHECK(parsed_windows == windows);
  CHECK(metrics_csv(back, parsed_windows) == text);
  REQUIRE(back.size() == rows.size());
  CHECK_FALSE(back[1].min_acc.has_value());
  CHECK(back[0].min_acc == rows[0].min_acc);
  CHECK(back[7].wp[1] == rows[7].wp[1]);

  std::vector<FinalRow> finals(2);
  finals[0].run_seed = "0";
  finals[0].acc = 0.5;
  finals[0].wf = {0.1};
  finals[0].wp = {std::nullopt};
  finals[1].run_seed = "mean";
  finals[1].wf = {std::nullopt};
  finals[1].wp = {0.2};
  const std::string ftext = final_csv(finals, {10});
  CHECK(final_csv(parse_final(ftext), {10}) == ftext);
  CHECK_FALSE(parse_final(ftext)[1].acc.has_value());
}

TEST_CASE("malformed csv reports the line") {
  CHECK(error_message([] { parse_csv("a,b\n1,2\n3\n"); }).find("line 3") != std::string::npos);
  CHECK(error_message([] { parse_eval_trace("run_seed,t,eval_task,n_samples,accuracy\n0,1,1,5,zz\n"); })
            .find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse_probes("wrong,header\n"), Error);
}

TEST_CASE("format_double is exact") {
  Rng rng = make_rng(2, "fmt");
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(u(rng)) % 200);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_optional(std::nullopt).empty());
}

TEST_CASE("grid cells enumerate the product with the last key fastest") {
  const Grid g = parse_grid("lr = 0.1, 0.01\nalpha = 0.1, 0.5, 0.9\n");
  const auto cells = grid_cells(g);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0] == std::vector<std::pair<std::string, std::string>>{{"lr", "0.1"}, {"alpha", "0.1"}});
  CHECK(cells[1][1].second == "0.5");
  CHECK(cells[3][0].second == "0.01");
  std::set<std::vector<std::pair<std::string, std::string>>> unique(cells.begin(), cells.end());
  CHECK(unique.size() == 6);
  CHECK_THROWS_AS(parse_grid("lr = \n"), Error);
  CHECK_THROWS_AS(parse_grid("lr = 0.1\nlr = 0.2\n"), Error);
}

TEST_CASE("grid search picks the best cell and survives a diverged one") {
  const auto root = testing::temp_dir("grid");
  RunConfig base = tiny_config("g");
  base.seeds = {0};
  const Grid g = parse_grid("lr = 1e300, 0.05\n");
  const GridResult r = grid_search(base, g, root.string());
  REQUIRE(r.cells.size() == 2);
  CHECK(r.cells[0].diverged);
  CHECK(r.cells[0].score == 0.0);
  CHECK_FALSE(r.cells[1].diverged);
  CHECK(r.best == 1);
  CHECK(fs::exists(root / "g" / "grid_report.csv"));
  const auto best = load_config((root / "g" / "best.cfg").string());
  CHECK(best.config.lr == 0.05);
  const auto report = parse_csv(read_text((root / "g" / "grid_report.csv").string()));
  CHECK(report.header == std::vector<std::string>{"cell", "lr", "score", "status"});
  CHECK(report.rows[0][3] == "diverged");
}

TEST_CASE("grid search is invariant to the order of the values") {
  const auto root = testing::temp_dir("grid_order");
  RunConfig base = tiny_config("a");
  base.seeds = {0};
  const GridResult a = grid_search(base, parse_grid("alpha = 0.2, 0.8\nmethod = er\n"), root.string());
  base.output_dir = "b";
  const GridResult b = grid_search(base, parse_grid("alpha = 0.8, 0.2\nmethod = er\n"), root.string());
  CHECK(a.cells[a.best].config.alpha == b.cells[b.best].config.alpha);
  CHECK(a.cells[0].score == b.cells[1].score);
  base.output_dir = "c";
  const GridResult single = grid_search(base, parse_grid("alpha = 0.2\n"), root.string());
  CHECK(single.cells.size() == 1);
  CHECK(single.best == 0);
}

TEST_CASE("experiment writes every artifact and re-runs byte for byte") {
  const auto root = testing::temp_dir("experiment");
  RunConfig c = tiny_config("exp");
  c.method = MethodKind::er;
  c.buffer_capacity = 20;
  const ExperimentResult r = run_experiment(c, root.string());
  REQUIRE_FALSE(r.error().has_value());
  const fs::path dir = root / "exp";
  for (const char* f : {"config.cfg", "eval_trace.csv", "metrics.csv", "probes.csv", "final.csv",
                        "accuracy_task1.svg", "accuracy_task2.svg"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto finals = parse_final(read_text((dir / "final.csv").string()));
  REQUIRE(finals.size() == 4);
  CHECK(finals[2].run_seed == "mean");
  CHECK(finals[3].run_seed == "sd");
  CHECK(*finals[2].acc == doctest::Approx((*finals[0].acc + *finals[1].acc) / 2));
  CHECK(r.mean_acc() == doctest::Approx(*finals[2].acc));

  const auto trace = read_text((dir / "eval_trace.csv").string());
  const auto metrics = read_text((dir / "metrics.csv").string());
  c.output_dir = "exp2";
  run_experiment(c, root.string());
  CHECK(read_text((root / "exp2" / "eval_trace.csv").string()) == trace);
  CHECK(read_text((root / "exp2" / "metrics.csv").string()) == metrics);
  CHECK(load_config((dir / "config.cfg").string()).config.method == MethodKind::er);
}

TEST_CASE("boundary-only evaluation logs one row per seen task per boundary") {
  const auto root = testing::temp_dir("boundary_only");
  RunConfig c = tiny_config("b");
  c.seeds = {0};
  c.rho_eval = 10;
  run_experiment(c, root.string());
  const auto trace = parse_eval_trace(read_text((root / "b" / "eval_trace.csv").string()));
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].t == 10);
  CHECK(trace[2].t == 20);
  CHECK(trace[2].eval_task == 2);
}

TEST_CASE("unwritable output directories are rejected before training") {
  const auto root = testing::temp_dir("unwritable");
  write_text((root / "blocker").string(), "x");
  RunConfig c = tiny_config("blocker/sub");
  CHECK_THROWS_AS(run_experiment(c, root.string()), Error);
  CHECK(resolve_output_dir(c, "/base") == "/base/blocker/sub");
  c.output_dir = "/abs";
  CHECK(resolve_output_dir(c, "/base") == "/abs");
}

TEST_CASE("svg rendering of degenerate curves") {
  std::vector<EvalTraceRow> trace{{0, 5, 1, 10, 0.7}};
  std::vector<MetricsRow> metrics;
  MetricsRow m;
  m.t = 5;
  m.acc_current = 0.7;
  m.wc_acc = 0.7;
  m.wf = {0};
  m.wp = {0};
  metrics.push_back(m);
  const auto curves = build_curves(trace, metrics);
  REQUIRE(curves.size() == 1);
  const std::string svg = render_svg(curves[0]);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);

  std::vector<EvalTraceRow> flat;
  for (long t = 1; t <= 30; ++t) {
    flat.push_back({0, t, 1, 10, 0.5});
    flat.push_back({1, t, 1, 10, 0.5});
  }
  const auto fc = build_curves(flat, {});
  REQUIRE(fc.size() == 1);
  CHECK(fc[0].n_seeds == 2);
  CHECK(fc[0].sd == std::vector<double>(30, 0.0));
  const std::string fsvg = render_svg(fc[0]);
  CHECK(fsvg.find("nan") == std::string::npos);
  CHECK(fsvg.find("inf") == std::string::npos);
}
