#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmscreen/cli.hpp"
#include "mmscreen/error.hpp"
#include "mmscreen/evaluation.hpp"
#include "mmscreen/report.hpp"
#include "mmscreen/synthcohort.hpp"

namespace py = pybind11;
using namespace mmscreen;

namespace {

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

std::size_t synthesize(const std::filesystem::path& out, std::optional<std::string> config_json,
                       std::optional<std::size_t> n, std::optional<std::uint64_t> seed) {
  auto c = config_json ? parse_synth_config(*config_json) : default_synth_config();
  if (n) c.n = *n;
  if (seed) c.seed = *seed;
  py::gil_scoped_release release;
  return generate_to(c, out).size();
}

py::list evaluate(const std::filesystem::path& dataset, const std::string& task, std::size_t runs,
                  std::uint64_t seed_base, std::size_t threads, std::vector<std::string> pipelines,
                  std::vector<std::string> groups) {
  RunConfig rc;
  rc.runs = runs;
  rc.seed_base = seed_base;
  rc.threads = threads;
  rc.keep_predictions = false;
  if (!pipelines.empty()) {
    rc.pipelines.clear();
    for (const auto& p : pipelines) rc.pipelines.push_back(parse_pipeline(p));
  }
  rc.groups = std::move(groups);
  TaskResult r;
  {
    py::gil_scoped_release release;
    const auto cohort = load_cohort(dataset);
    r = run_task(cohort, task, to_eval_config(rc));
  }
  py::list rows;
  for (const auto& m : r.models) {
    py::dict d;
    d["pipeline"] = std::string(to_string(m.pipeline));
    d["model"] = m.model;
    d["fused"] = m.fused;
    d["auroc"] = m.auroc.mean;
    d["auroc_ci95"] = m.auroc.ci_half_width;
    d["accuracy"] = m.accuracy.mean;
    d["macro_f1"] = m.macro_f1.mean;
    d["runs"] = m.auroc.per_run.size();
    rows.append(d);
  }
  return rows;
}

py::list folds(std::size_t n, std::size_t runs, std::uint64_t seed_base) {
  py::list out;
  for (const auto& p : make_folds(n, runs, seed_base)) {
    py::dict d;
    d["run"] = p.run;
    d["fold"] = p.fold;
    d["seed"] = p.seed;
    d["train"] = p.train;
    d["validation"] = p.validation;
    d["test"] = p.test;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multimodal cognitive screening: nested cross-validation, fusion, attribution and fairness";
  m.attr("__version__") = std::string(kVersion);

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FairnessUndefinedError>(m, "FairnessUndefinedError", PyExc_RuntimeError);

  m.def("cli", &cli, py::arg("args"), "Run the command line tool; returns (exit_code, stdout, stderr).");
  m.def("synthesize", &synthesize, py::arg("out"), py::arg("config_json") = std::nullopt,
        py::arg("n") = std::nullopt, py::arg("seed") = std::nullopt,
        "Write a synthetic cohort and return its participant count.");
  m.def("evaluate", &evaluate, py::arg("dataset"), py::arg("task"), py::arg("runs") = 100,
        py::arg("seed_base") = 42, py::arg("threads") = 0, py::arg("pipelines") = std::vector<std::string>{},
        py::arg("groups") = std::vector<std::string>{});
  m.def("make_folds", &folds, py::arg("n"), py::arg("runs"), py::arg("seed_base") = 42);
  m.def(
      "auroc",
      [](std::vector<double> scores, std::vector<int> labels) {
        if (scores.size() != labels.size()) throw py::value_error("scores and labels differ in length");
        return auroc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "accuracy", [](std::vector<int> p, std::vector<int> y) { return accuracy(p, y); }, py::arg("preds"),
      py::arg("labels"));
  m.def(
      "macro_f1", [](std::vector<int> p, std::vector<int> y) { return macro_f1(p, y); }, py::arg("preds"),
      py::arg("labels"));
}
