#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cleval/cli/config.hpp"
#include "cleval/cli/experiment.hpp"
#include "cleval/error.hpp"
#include "cleval/methods.hpp"
#include "cleval/metrics.hpp"
#include "cleval/oracles.hpp"

namespace py = pybind11;
namespace cc = cleval::cli;

namespace {

py::dict summary_dict(const cleval::BoundarySummary& b) {
  py::dict d;
  d["task"] = b.task;
  d["t"] = b.t;
  d["acc"] = b.acc;
  d["forg"] = b.forg ? py::cast(*b.forg) : py::none();
  d["min_acc"] = b.min_acc ? py::cast(*b.min_acc) : py::none();
  d["wc_acc"] = b.wc_acc;
  d["wf"] = b.wf;
  d["wp"] = b.wp;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Continual evaluation metrics, learners and experiment runner";

  static py::exception<cleval::Error> error(m, "ClevalError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const cleval::Error& e) {
      error(("[" + std::string(cleval::to_string(e.code())) + "] " + e.what()).c_str());
    }
  });

  py::class_<cleval::WindowTracker>(m, "WindowTracker")
      .def(py::init<int>(), py::arg("window"))
      .def("push", &cleval::WindowTracker::push, py::arg("accuracy"))
      .def_property_readonly("wf", &cleval::WindowTracker::wf)
      .def_property_readonly("wp", &cleval::WindowTracker::wp)
      .def_property_readonly("window", &cleval::WindowTracker::window);

  m.def(
      "oracle_wf_wp",
      [](const std::vector<double>& trace, int window) {
        const auto r = cleval::oracle_wf_wp(trace, window);
        return py::make_tuple(r.wf, r.wp);
      },
      py::arg("trace"), py::arg("window"), "Brute-force worst in-window drop and rise.");

  m.def(
      "wc_acc",
      [](double acc_current, std::optional<double> min_acc, int k) {
        return cleval::wc_acc(acc_current, min_acc, k);
      },
      py::arg("acc_current"), py::arg("min_acc"), py::arg("k"));

  m.def(
      "gem_project",
      [](const std::vector<double>& g, const std::vector<std::vector<double>>& task_grads, double margin) {
        std::vector<cleval::Gradient> tg;
        for (const auto& v : task_grads) {
          tg.push_back(cleval::Gradient{v});
        }
        const auto r = cleval::gem_project(cleval::Gradient{g}, tg, margin);
        return py::make_tuple(r.projected.values, r.violated);
      },
      py::arg("g"), py::arg("task_grads"), py::arg("margin") = 0.0,
      "Projects g so that its dot product with every task gradient is nonnegative.");

  m.def(
      "parse_config",
      [](const std::string& text) {
        const auto parsed = cc::parse_config(text);
        return py::make_tuple(cc::to_text(parsed.config), parsed.warnings);
      },
      py::arg("text"), "Validates a config; returns its normalized text and warnings.");

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& output_root) {
        const auto parsed = cc::parse_config(config_text);
        cc::ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = cc::run_experiment(parsed.config, output_root);
        }
        py::dict out;
        out["dir"] = result.dir;
        py::list runs;
        for (const auto& r : result.runs) {
          py::dict d;
          d["seed"] = r.seed;
          d["error"] = r.log.error ? py::cast(r.log.error->message) : py::none();
          py::list summaries;
          for (const auto& b : r.log.boundary_summaries) {
            summaries.append(summary_dict(b));
          }
          d["boundaries"] = summaries;
          runs.append(d);
        }
        out["runs"] = runs;
        out["plots"] = result.plots;
        return out;
      },
      py::arg("config_text"), py::arg("output_root") = "",
      "Runs every seed of a config and writes CSV traces and SVG plots.");

  m.def(
      "oracle_check",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& s : {cleval::oracle::check_metrics(seed, 1000), cleval::oracle::check_gradients(seed, 100),
                              cleval::oracle::check_gem(seed, 100)}) {
          py::dict d;
          d["suite"] = s.name;
          d["cases"] = s.cases;
          d["max_error"] = s.max_error;
          d["tolerance"] = s.tolerance;
          d["passed"] = s.passed();
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0);
}
