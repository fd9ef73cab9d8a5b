#include "dfcausal/analytic_conditional.hpp"
#include "dfcausal/causal_verdict.hpp"
#include "dfcausal/data_io.hpp"
#include "dfcausal/df_estimator.hpp"
#include "dfcausal/gaussian_engine.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>

namespace py = pybind11;
using namespace dfc;

namespace {

// Rich results cross the boundary as plain dicts, using the same JSON mapping as
// the command-line reports.
py::object to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<Subsystem> groups_from_dict(const std::map<std::string, std::vector<int>>& groups) {
  std::vector<Subsystem> out;
  for (const auto& [name, comps] : groups) out.push_back({name, comps});
  return out;
}

TimeSeries make_series(const Matrix& values, std::optional<std::vector<std::string>> names,
                       std::optional<std::map<std::string, std::vector<int>>> groups) {
  TimeSeries ts;
  ts.values = values;
  ts.names = names ? *names : default_names(static_cast<int>(values.cols()));
  if (groups) {
    ts.subsystems = groups_from_dict(*groups);
  } else {
    for (std::size_t i = 0; i < ts.names.size(); ++i)
      ts.subsystems.push_back({ts.names[i], {static_cast<int>(i)}});
  }
  ts.validate();
  return ts;
}

struct EstimationArgs {
  std::vector<double> grid;
  int n_max;
  std::uint64_t seed;
  unsigned workers;
  std::string window;
  std::string binning;
  std::string targets;
  std::size_t min_count;
};

ConstraintScheme scheme_for(const TimeSeries& ts, const std::string& target,
                            const std::optional<std::string>& with, const EstimationArgs& a) {
  const TargetMode mode = a.targets == "median" ? TargetMode::Median : TargetMode::Zero;
  auto s = with ? mixed_scheme(ts, target, *with, a.n_max, mode)
                : own_lag_scheme(ts, target, a.n_max, mode);
  s.window_shape = window_shape_from_string(a.window);
  s.binning = binning_from_string(a.binning);
  return s;
}

CurveOptions curve_opts(const EstimationArgs& a) {
  CurveOptions c;
  c.seed = a.seed;
  c.workers = a.workers;
  c.spread.min_count = a.min_count;
  return c;
}

PyObject* exc_base = nullptr;
PyObject* exc_by_kind[7] = {};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Degrees-of-freedom estimation and causal verdicts for linear stochastic systems";
  m.attr("__version__") = DFCAUSAL_VERSION;

  // Exception classes live for the whole process; one subclass per error kind.
  exc_base = PyErr_NewException("dfcausal.Error", PyExc_RuntimeError, nullptr);
  m.attr("Error") = py::handle(exc_base);
  const std::pair<ErrorKind, const char*> kinds[] = {
      {ErrorKind::Usage, "UsageError"},
      {ErrorKind::Precondition, "PreconditionError"},
      {ErrorKind::Divergence, "DivergenceError"},
      {ErrorKind::InsufficientData, "InsufficientDataError"},
      {ErrorKind::Ambiguous, "AmbiguousError"},
      {ErrorKind::Io, "IoError"},
      {ErrorKind::Parse, "ParseError"},
  };
  for (const auto& [kind, name] : kinds) {
    PyObject* cls = PyErr_NewException(("dfcausal." + std::string(name)).c_str(), exc_base, nullptr);
    exc_by_kind[static_cast<int>(kind)] = cls;
    m.attr(name) = py::handle(cls);
  }
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(exc_by_kind[static_cast<int>(e.kind())], e.what());
    }
  });

  // --- systems -------------------------------------------------------------

  py::enum_<Coupling>(m, "Coupling")
      .value("MATCHED", Coupling::Matched)
      .value("FIRST_COMPONENT", Coupling::FirstComponent);

  py::class_<ExampleParams>(m, "ExampleParams")
      .def(py::init<>())
      .def_readwrite("sigma", &ExampleParams::sigma)
      .def_readwrite("phi_x", &ExampleParams::phi_x)
      .def_readwrite("phi_y", &ExampleParams::phi_y)
      .def_readwrite("phi_z", &ExampleParams::phi_z)
      .def_readwrite("alpha_x", &ExampleParams::alpha_x)
      .def_readwrite("alpha_y", &ExampleParams::alpha_y)
      .def_readwrite("alpha_z", &ExampleParams::alpha_z)
      .def_readwrite("g", &ExampleParams::g)
      .def_readwrite("coupling", &ExampleParams::coupling)
      .def_static("preset", &ExampleParams::preset, py::arg("name"));

  py::class_<LinearSystemSpec>(m, "LinearSystemSpec")
      .def(py::init([](const Matrix& Q, const Matrix& S, std::optional<std::vector<std::string>> names,
                       std::optional<std::map<std::string, std::vector<int>>> groups) {
             LinearSystemSpec s;
             s.Q = Q;
             s.S = S;
             s.names = names ? *names : default_names(static_cast<int>(Q.rows()));
             if (groups) s.subsystems = groups_from_dict(*groups);
             s.validate();
             return s;
           }),
           py::arg("Q"), py::arg("S"), py::arg("names") = py::none(), py::arg("groups") = py::none())
      .def_readonly("Q", &LinearSystemSpec::Q)
      .def_readonly("S", &LinearSystemSpec::S)
      .def_readonly("names", &LinearSystemSpec::names)
      .def_property_readonly("groups", [](const LinearSystemSpec& s) {
        std::map<std::string, std::vector<int>> g;
        for (const auto& sub : s.subsystems) g[sub.name] = sub.components;
        return g;
      });

  m.def("build_example_system", &build_example_system, py::arg("params"));
  m.def(
      "example_system",
      [](const std::string& preset) { return build_example_system(ExampleParams::preset(preset)); },
      py::arg("preset") = "stochastic", "Example system for a named preset.");
  m.def("spectral_radius", &spectral_radius, py::arg("Q"));
  m.def("stationary_covariance", &stationary_covariance, py::arg("spec"));
  m.def("lyapunov_residual", &lyapunov_residual, py::arg("spec"), py::arg("C"));

  py::class_<GaussianBelief>(m, "GaussianBelief")
      .def_readonly("mean", &GaussianBelief::mean)
      .def_readonly("cov", &GaussianBelief::cov);

  m.def(
      "condition_on_linear_observation",
      [](const Matrix& prior, const Matrix& R, const Vector& z, const Matrix& noise_cov) {
        return condition_on_linear_observation(prior, LinearObservation{R, z, noise_cov});
      },
      py::arg("prior_cov"), py::arg("R"), py::arg("z"), py::arg("noise_cov"));
  m.def("degenerate_condition", &degenerate_condition, py::arg("prior_cov"), py::arg("R"),
        py::arg("z"));

  py::class_<TimeSeries>(m, "TimeSeries")
      .def(py::init(&make_series), py::arg("values"), py::arg("names") = py::none(),
           py::arg("groups") = py::none())
      .def_readonly("values", &TimeSeries::values)
      .def_readonly("names", &TimeSeries::names)
      .def_property_readonly("groups",
                             [](const TimeSeries& t) {
                               std::map<std::string, std::vector<int>> g;
                               for (const auto& sub : t.subsystems) g[sub.name] = sub.components;
                               return g;
                             })
      .def("__len__", [](const TimeSeries& t) { return t.length(); });

  m.def("sample_trajectory", &sample_trajectory, py::arg("spec"), py::arg("n_steps"),
        py::arg("seed"), py::arg("burn_in") = 10000, py::call_guard<py::gil_scoped_release>());

  // --- analytic conditioning -------------------------------------------------

  py::class_<PastConstraint>(m, "PastConstraint")
      .def(py::init([](int lag, int component, double target, double window_sd,
                       const std::string& shape) {
             return PastConstraint{lag, component, target, window_sd,
                                   window_shape_from_string(shape)};
           }),
           py::arg("lag"), py::arg("component"), py::arg("target") = 0.0,
           py::arg("window_sd") = 0.0, py::arg("shape") = "gaussian")
      .def_readonly("lag", &PastConstraint::lag)
      .def_readonly("component", &PastConstraint::component)
      .def_readonly("target", &PastConstraint::target)
      .def_readonly("window_sd", &PastConstraint::window_sd);

  auto as_set = [](const std::vector<PastConstraint>& v) { return ConstraintSet{v}; };
  m.def(
      "constrained_present",
      [as_set](const LinearSystemSpec& spec, const std::vector<PastConstraint>& cs) {
        return constrained_present(spec, as_set(cs));
      },
      py::arg("spec"), py::arg("constraints"));
  m.def(
      "exact_joint_conditioning",
      [as_set](const LinearSystemSpec& spec, const std::vector<PastConstraint>& cs) {
        return exact_joint_conditioning(spec, as_set(cs));
      },
      py::arg("spec"), py::arg("constraints"));
  m.def(
      "mc_conditional",
      [as_set](const LinearSystemSpec& spec, const std::vector<PastConstraint>& cs,
               std::size_t n_samples, std::uint64_t seed, unsigned workers) {
        McOptions o;
        o.workers = workers;
        McEstimate e;
        {
          py::gil_scoped_release release;
          e = mc_conditional(spec, as_set(cs), n_samples, seed, o);
        }
        return to_py(to_json(e));
      },
      py::arg("spec"), py::arg("constraints"), py::arg("n_samples"), py::arg("seed") = 0,
      py::arg("workers") = 0);
  m.def(
      "cross_check",
      [](const LinearSystemSpec& spec, const std::vector<int>& components,
         std::optional<std::vector<double>> targets, const std::vector<int>& max_lags,
         const std::vector<double>& sigma_ws) {
        const auto t = targets ? *targets : std::vector<double>(components.size(), 0.0);
        py::list rows;
        for (const auto& r : cross_check(spec, components, t, max_lags, sigma_ws))
          rows.append(py::dict(py::arg("lag_set") = r.lag_set, py::arg("sigma_w") = r.sigma_w,
                               py::arg("max_rel_diff_cov") = r.max_rel_diff_cov,
                               py::arg("rel_diff_mean") = r.rel_diff_mean));
        return rows;
      },
      py::arg("spec"), py::arg("components"), py::arg("targets") = py::none(),
      py::arg("max_lags") = std::vector<int>{1, 2, 3, 4},
      py::arg("sigma_ws") = std::vector<double>{1e-3, 1e-2, 1e-1});

  // --- df estimation and verdicts ----------------------------------------------

  m.def("make_grid", &make_grid, py::arg("min"), py::arg("max"), py::arg("points_per_decade") = 6);

  m.def(
      "curve_family",
      [](const TimeSeries& ts, const std::string& target, std::optional<std::string> with,
         std::optional<std::vector<double>> grid, int n_max, std::uint64_t seed, unsigned workers,
         const std::string& window, const std::string& binning, const std::string& targets,
         std::size_t min_count) {
        EstimationArgs a{grid ? *grid : make_grid(1e-4, 1.0, 6), n_max, seed, workers,
                         window, binning, targets, min_count};
        DfCurveFamily fam;
        {
          py::gil_scoped_release release;
          fam = curve_family(ts, scheme_for(ts, target, with, a), a.grid, n_max, curve_opts(a));
        }
        return to_py(to_json(fam));
      },
      py::arg("series"), py::arg("target"), py::arg("with_group") = py::none(),
      py::arg("grid") = py::none(), py::arg("n_max") = 4, py::arg("seed") = 0,
      py::arg("workers") = 0, py::arg("window") = "uniform", py::arg("binning") = "pooled",
      py::arg("targets") = "zero", py::arg("min_count") = 30,
      "Curve family as a dict (target_group, block_size, curves with their points).");

  m.def(
      "estimate_df",
      [](const TimeSeries& ts, const std::string& target, std::optional<std::string> with,
         std::optional<std::vector<double>> grid, int n_max, std::uint64_t seed, unsigned workers,
         const std::string& window, const std::string& binning, const std::string& targets,
         std::size_t min_count, double slope_threshold, double merge_tol, double se_mult) {
        EstimationArgs a{grid ? *grid : make_grid(1e-4, 1.0, 6), n_max, seed, workers,
                         window, binning, targets, min_count};
        PlateauOptions p;
        p.slope_threshold = slope_threshold;
        p.merge_rel_tol = merge_tol;
        p.se_multiplier = se_mult;
        p.min_count = min_count;
        DfResult r;
        {
          py::gil_scoped_release release;
          r = estimate_df(ts, scheme_for(ts, target, with, a), a.grid, n_max, curve_opts(a), p);
        }
        Json j;
        j["estimate"] = to_json(r.estimate);
        j["plateaus"] = to_json(r.report);
        j["family"] = to_json(r.family);
        return to_py(j);
      },
      py::arg("series"), py::arg("target"), py::arg("with_group") = py::none(),
      py::arg("grid") = py::none(), py::arg("n_max") = 4, py::arg("seed") = 0,
      py::arg("workers") = 0, py::arg("window") = "uniform", py::arg("binning") = "pooled",
      py::arg("targets") = "zero", py::arg("min_count") = 30, py::arg("slope_threshold") = 0.2,
      py::arg("merge_tol") = 0.15, py::arg("se_mult") = 3.0,
      "Curve family, plateau classification and df estimate as a dict.");

  m.def(
      "verdict",
      [](int o_x, int o_y, int o_j, int unit) {
        return to_py(to_json(verdict({o_x, o_y, o_j, unit})));
      },
      py::arg("o_x"), py::arg("o_y"), py::arg("o_j"), py::arg("unit") = 1,
      "Decision-table verdict for an order triple.");

  m.def(
      "analyze_pair",
      [](const TimeSeries& ts, const std::string& x, const std::string& y,
         std::optional<std::vector<double>> grid, int n_max, std::uint64_t seed, unsigned workers) {
        PairConfig cfg;
        if (grid) cfg.sigma_w_grid = *grid;
        cfg.n_constr_max = n_max;
        cfg.curve.seed = seed;
        cfg.curve.workers = workers;
        PairAnalysis a;
        {
          py::gil_scoped_release release;
          a = analyze_pair(ts, x, y, cfg);
        }
        Json j;
        j["verdict"] = to_json(a.verdict);
        j["df_x"] = to_json(a.x.estimate);
        j["df_y"] = to_json(a.y.estimate);
        j["df_joint"] = to_json(a.joint.estimate);
        return to_py(j);
      },
      py::arg("series"), py::arg("x"), py::arg("y"), py::arg("grid") = py::none(),
      py::arg("n_max") = 4, py::arg("seed") = 0, py::arg("workers") = 0);

  m.def(
      "driving_probe",
      [](const TimeSeries& ts, const std::string& source, const std::string& target,
         const std::vector<double>& grid, std::size_t min_count, double se_mult, std::uint64_t seed) {
        ProbeOptions o;
        o.min_count = min_count;
        o.se_multiplier = se_mult;
        o.seed = seed;
        ProbeReport r;
        {
          py::gil_scoped_release release;
          r = driving_probe(ts, source, target, grid, o);
        }
        return to_py(to_json(r));
      },
      py::arg("series"), py::arg("source"), py::arg("target"), py::arg("grid"),
      py::arg("min_count") = 30, py::arg("se_mult") = 3.0, py::arg("seed") = 0);

  m.def(
      "chicken_egg",
      [](const Matrix& values, const std::vector<std::string>& names,
         std::optional<std::vector<double>> grid, std::uint64_t seed) {
        RawTable t{names, values, "<python>"};
        ChickenEggOptions o;
        o.probe.seed = seed;
        return to_py(to_json(chicken_egg_pipeline(t, grid ? *grid : make_grid(0.1, 2.0, 6), o)));
      },
      py::arg("values"), py::arg("names"), py::arg("grid") = py::none(), py::arg("seed") = 0,
      "Chicken-egg pipeline on a table whose columns include chicken and egg (and optionally year).");
}
