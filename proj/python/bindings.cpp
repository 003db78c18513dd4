// Thin bindings: structured results cross the boundary as JSON text and are
// decoded by the Python package.

#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "obstudy/balance.hpp"
#include "obstudy/error.hpp"
#include "obstudy/estimators.hpp"
#include "obstudy/power.hpp"
#include "obstudy/principal_strata.hpp"
#include "obstudy/propensity.hpp"
#include "obstudy/quarantine.hpp"
#include "obstudy/replicate.hpp"
#include "obstudy/rng.hpp"
#include "obstudy/subclass.hpp"
#include "obstudy/workspace.hpp"

namespace py = pybind11;
using namespace obstudy;

namespace {

PyObject* error_type = nullptr;

SubclassAssignment from_labels(const std::vector<int>& labels, int k) {
  SubclassAssignment a;
  a.labels = labels;
  a.k = k;
  return a;
}

std::string fit_json(const PropensityFit& fit) {
  return nlohmann::json{{"labels", fit.labels},
                        {"coefficients", fit.coefficients},
                        {"linear_scores", fit.linear_scores},
                        {"probabilities", fit.probabilities},
                        {"log_likelihood", fit.log_likelihood},
                        {"iterations", fit.iterations},
                        {"converged", fit.converged},
                        {"separation_flag", fit.separation_flag}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_obstudy, m) {
  m.doc() = "Propensity-score subclassification and principal-strata analysis";

  error_type = PyErr_NewException("obstudy._obstudy.ObstudyError", PyExc_RuntimeError, nullptr);
  m.attr("ObstudyError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type, inst.ptr());
    }
  });

  m.attr("GENERATOR") = std::string(Rng::kIdentity);

  py::class_<StudyTable>(m, "StudyTable")
      .def_property_readonly("n_units", &StudyTable::n_units)
      .def_property_readonly("name", &StudyTable::name)
      .def("column_names",
           [](const StudyTable& t) {
             std::vector<std::string> names;
             for (const auto& c : t.columns()) names.push_back(c.name);
             return names;
           })
      .def("roles",
           [](const StudyTable& t) {
             std::map<std::string, std::string> roles;
             for (const auto& c : t.columns()) roles[c.name] = std::string(to_string(c.role));
             return roles;
           })
      .def("column", [](const StudyTable& t, const std::string& name) { return t.column(name).values; })
      .def("treatment_indicator", &StudyTable::treatment_indicator)
      .def("has_outcomes", &StudyTable::has_outcomes);

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& schema_json) {
        return load_csv(path, Schema::from_json(nlohmann::json::parse(schema_json)));
      },
      py::arg("path"), py::arg("schema_json"));

  m.def(
      "restrict_range",
      [](const StudyTable& t, const std::string& column, double lo, double hi) {
        return restrict_range(t, column, lo, hi).table;
      },
      py::arg("table"), py::arg("column"), py::arg("lo"), py::arg("hi"));

  m.def(
      "quarantine",
      [](const StudyTable& t) {
        Quarantine q = quarantine_outcomes(t);
        return py::make_tuple(q.design_table, q.sealed.payload_digest(), q.sealed.column_names());
      },
      py::arg("table"), "Returns (design_table, seal_digest, sealed_columns).");

  m.def(
      "fit_propensity",
      [](const StudyTable& design, const std::string& model_json) {
        return fit_json(fit_propensity(design, ModelSpec::from_json(nlohmann::json::parse(model_json))));
      },
      py::arg("design_table"), py::arg("model_json"));

  m.def(
      "subclassify",
      [](const std::vector<double>& scores, int k, const std::string& method) {
        SubclassMethod how = subclass_method_from_string(method);
        auto a = how == SubclassMethod::equal_width ? subclassify_equal_width(scores, k)
                                                    : subclassify_equal_frequency(scores, k);
        return a.to_json().dump();
      },
      py::arg("scores"), py::arg("k") = 5, py::arg("method") = "quantile");

  m.def(
      "trim_nonoverlap",
      [](const std::vector<int>& labels, int k, const std::vector<int>& w) {
        return trim_nonoverlap(from_labels(labels, k), w).to_json().dump();
      },
      py::arg("labels"), py::arg("k"), py::arg("w"));

  m.def("standardized_diff", [](const std::vector<double>& x, const std::vector<int>& w) {
    return standardized_diff(x, w);
  });

  m.def(
      "balance_report",
      [](const StudyTable& design, const std::vector<double>& scores, const std::vector<int>& labels, int k) {
        return balance_report(design, scores, from_labels(labels, k)).to_json().dump();
      },
      py::arg("design_table"), py::arg("linear_scores"), py::arg("labels"), py::arg("k"));

  m.def("crude_difference", [](const std::vector<double>& y, const std::vector<int>& w) {
    return crude_difference(y, w).to_json().dump();
  });

  m.def(
      "stratified_difference",
      [](const std::vector<double>& y, const std::vector<int>& w, const std::vector<int>& labels, int k,
         const std::string& weighting) {
        StratifiedOptions o;
        if (weighting == "treated") o.weighting = StratumWeighting::treated_size;
        else if (weighting != "total") fail(ErrorKind::domain, "weighting must be 'total' or 'treated'");
        return stratified_difference(y, w, from_labels(labels, k), o).to_json().dump();
      },
      py::arg("y"), py::arg("w"), py::arg("labels"), py::arg("k"), py::arg("weighting") = "total");

  m.def(
      "grouped_difference",
      [](const std::vector<std::tuple<int, int, std::size_t, double>>& rows) {
        std::vector<GroupedRow> g;
        for (const auto& [s, arm, n, mean] : rows) g.push_back({s, arm, n, mean});
        return stratified_difference(grouped_ingest(g)).to_json().dump();
      },
      py::arg("rows"), "Rows are (subclass, arm, n, mean) with arm 1 for treated.");

  m.def(
      "estimate_strata",
      [](std::size_t n_lL, std::size_t n_lS, std::size_t n_sL, std::size_t n_sS) {
        StrataProportions p = estimate_strata({n_lL, n_lS, n_sL, n_sS});
        return py::make_tuple(p.pi_LL, p.pi_LS, p.pi_SS);
      },
      py::arg("n_lL"), py::arg("n_lS"), py::arg("n_sL"), py::arg("n_sS"));

  m.def(
      "cace_by_subclass",
      [](const std::vector<double>& y, const std::vector<int>& h, const std::vector<int>& t,
         const std::vector<int>& labels, int k, const std::string& pooling) {
        CacePooling how = pooling == "size" ? CacePooling::subclass_size : CacePooling::complier_mass;
        if (pooling != "size" && pooling != "mass") fail(ErrorKind::domain, "pooling must be 'mass' or 'size'");
        return cace_by_subclass(y, h, t, from_labels(labels, k), how).to_json().dump();
      },
      py::arg("y"), py::arg("h"), py::arg("t"), py::arg("labels"), py::arg("k"), py::arg("pooling") = "mass");

  m.def(
      "monotonicity_audit",
      [](const std::vector<int>& h, const std::vector<int>& t, const std::vector<int>& labels, int k,
         const std::string& direction) {
        MonotonicityDirection d = direction == "no_LS" ? MonotonicityDirection::no_LS : MonotonicityDirection::no_SL;
        return monotonicity_audit(h, t, from_labels(labels, k), d).to_json().dump();
      },
      py::arg("h"), py::arg("t"), py::arg("labels"), py::arg("k"), py::arg("direction") = "no_SL");

  m.def(
      "adequacy_check",
      [](std::size_t nt, std::size_t nc, double d, double alpha, double power) {
        AdequacyVerdict v = adequacy_check(nt, nc, d, alpha, power);
        return py::dict(py::arg("achieved_power") = v.achieved_power,
                        py::arg("required_n_per_arm_exact") = v.required_n_per_arm_exact,
                        py::arg("required_n_per_arm") = v.required_n_per_arm, py::arg("adequate") = v.adequate);
      },
      py::arg("n_treated"), py::arg("n_control"), py::arg("effect_size"), py::arg("alpha") = 0.05,
      py::arg("power") = 0.8);

  m.def(
      "simulate",
      [](const std::string& study_json, int reps, std::uint64_t seed, unsigned threads) {
        Recipe recipe = study_recipe(nlohmann::json::parse(study_json));
        ReplicationRun run;
        {
          py::gil_scoped_release release;
          run = replicate(recipe, reps, seed, threads);
        }
        return py::make_tuple(run.summary_json().dump(), run.to_csv());
      },
      py::arg("study_json"), py::arg("reps"), py::arg("seed"), py::arg("threads") = 0,
      "Returns (summary_json, replications_csv).");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command line; returns (exit_code, stdout, stderr).");
}
