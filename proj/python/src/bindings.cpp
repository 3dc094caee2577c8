#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hamlab/errors.hpp"
#include "hamlab/experiments.hpp"
#include "hamlab/hamiltonianizer.hpp"
#include "hamlab/refinement.hpp"
#include "hamlab/solvers.hpp"

namespace py = pybind11;
using namespace hamlab;

namespace {

py::dict gradient_dict(const GradientReport& r) {
  py::dict d;
  d["states"] = r.trajectory.states;
  d["costates"] = r.costates.costates;
  d["gradient"] = r.gradient;
  d["stationarity"] = r.stationarity;
  d["cost"] = r.cost;
  d["grad_inf_norm"] = r.grad_inf_norm;
  d["stationarity_inf_norm"] = r.stationarity_inf_norm;
  return d;
}

py::list trace_list(const IterationTrace& t) {
  py::list out;
  for (const auto& r : t.records) {
    py::dict d;
    d["iteration"] = r.iteration;
    d["cost"] = r.cost;
    d["grad_inf_norm"] = r.grad_inf_norm;
    d["stationarity_inf_norm"] = r.stationarity_inf_norm;
    d["step_length"] = r.step_length;
    out.append(d);
  }
  return out;
}

SolverConfig make_config(const std::string& method, const std::string& step_policy, double alpha,
                         double tolerance, std::size_t max_iterations, const std::string& mode,
                         std::optional<double> mu) {
  SolverConfig c;
  c.method = parse_method(method);
  c.mode = parse_mode(mode);
  switch (parse_step_kind(step_policy)) {
    case StepPolicy::Kind::fixed: c.step = StepPolicy::fixed(alpha); break;
    case StepPolicy::Kind::compensated: c.step = StepPolicy::compensated(); break;
    case StepPolicy::Kind::backtracking: c.step = StepPolicy::backtracking(alpha); break;
  }
  c.tolerance = tolerance;
  c.max_iterations = max_iterations;
  c.hessian_regularization_mu = mu;
  validate(c);
  return c;
}

UniformGrid grid_for(const ScalarOCP& p, std::size_t n) { return UniformGrid::over(p, n); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete-adjoint direct shooting for scalar optimal control";

  auto base = py::register_exception<Error>(m, "HamlabError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<SingularMetric>(m, "SingularMetric", base.ptr());
  py::register_exception<DegenerateGrid>(m, "DegenerateGrid", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<ScalarOCP>(m, "Problem")
      .def_static(
          "builtin", [](const std::string& name) { return builtin_problem(parse_problem_id(name)); },
          py::arg("name"))
      .def_static(
          "custom",
          [](ScalarFn2 f, ScalarFn2 f_x, ScalarFn2 f_u, ScalarFn1 e, ScalarFn1 e_x, double x0,
             double t0, double tf, std::string name) {
            ScalarOCP p{std::move(name), std::move(f), std::move(f_x), std::move(f_u),
                        std::move(e), std::move(e_x), x0, t0, tf};
            validate(p);
            return p;
          },
          py::arg("f"), py::arg("f_x"), py::arg("f_u"), py::arg("e"), py::arg("e_x"),
          py::arg("x0") = 1.0, py::arg("t0") = 0.0, py::arg("tf") = 1.0,
          py::arg("name") = "custom")
      .def_readonly("name", &ScalarOCP::name)
      .def_readonly("x0", &ScalarOCP::x0)
      .def_readonly("t0", &ScalarOCP::t0)
      .def_readonly("tf", &ScalarOCP::tf)
      .def("__repr__", [](const ScalarOCP& p) { return "<Problem " + p.name + ">"; });

  m.attr("BUILTIN_PROBLEMS") = py::make_tuple("linear_integrator", "damped_linear", "bilinear",
                                              "cubic_drag");

  m.def("hamiltonian", &hamiltonian, py::arg("problem"), py::arg("lam"), py::arg("x"), py::arg("u"));
  m.def("hamiltonian_du", &hamiltonian_du, py::arg("problem"), py::arg("lam"), py::arg("x"),
        py::arg("u"));

  m.def(
      "forward_simulate",
      [](const ScalarOCP& p, const std::vector<double>& u) {
        return forward_simulate(p, grid_for(p, u.size()), u).states;
      },
      py::arg("problem"), py::arg("controls"), "States x_1..x_N under forward Euler.");

  m.def(
      "adjoint_gradient",
      [](const ScalarOCP& p, const std::vector<double>& u) {
        return gradient_dict(adjoint_gradient(p, grid_for(p, u.size()), u));
      },
      py::arg("problem"), py::arg("controls"));

  m.def(
      "fd_gradient",
      [](const ScalarOCP& p, const std::vector<double>& u, double step) {
        return fd_gradient(p, grid_for(p, u.size()), u, step);
      },
      py::arg("problem"), py::arg("controls"), py::arg("fd_step") = kDefaultFdStep);

  m.def(
      "verify_equivalence",
      [](const ScalarOCP& p, const std::vector<double>& u, double step, double tol) {
        const auto v = verify_equivalence(p, grid_for(p, u.size()), u, step, tol);
        py::dict d;
        d["fd_gradient"] = v.fd_gradient;
        d["scaled_stationarity"] = v.scaled_stationarity;
        d["fd_deviation"] = v.fd_deviation;
        d["identity_defect"] = v.identity_defect;
        d["passed"] = v.passed;
        return d;
      },
      py::arg("problem"), py::arg("controls"), py::arg("fd_step") = kDefaultFdStep,
      py::arg("fd_tolerance") = 1e-5);

  m.def("stationarity_bound", &stationarity_bound, py::arg("epsilon"), py::arg("h"));

  m.def(
      "solve",
      [](const ScalarOCP& p, const std::vector<double>& u0, const std::string& method,
         const std::string& step_policy, double alpha, double tolerance,
         std::size_t max_iterations, const std::string& mode, std::optional<double> mu) {
        const auto cfg = make_config(method, step_policy, alpha, tolerance, max_iterations, mode, mu);
        const auto res = solve_direct(p, grid_for(p, u0.size()), u0, cfg);
        py::dict d;
        d["controls"] = res.controls;
        d["status"] = std::string(to_string(res.trace.status));
        d["iterations"] = res.trace.iterations();
        d["warnings"] = res.trace.warnings;
        d["message"] = res.trace.message;
        d["trace"] = trace_list(res.trace);
        return d;
      },
      py::arg("problem"), py::arg("initial_controls"), py::arg("method") = "gradient",
      py::arg("step_policy") = "fixed", py::arg("alpha") = 1.0, py::arg("tolerance") = 1e-8,
      py::arg("max_iterations") = 1000, py::arg("mode") = "direct",
      py::arg("hessian_regularization_mu") = py::none(),
      "Runs the direct-shooting iteration from `initial_controls` (length sets N).");

  m.def(
      "solve_with_refinement",
      [](const ScalarOCP& p, std::size_t n0, std::size_t levels, double ratio,
         std::size_t max_iterations, const std::vector<double>& u0) {
        const auto schedule = RefinementSchedule::doubling(n0, levels, ratio, p.horizon(), max_iterations);
        SolverConfig cfg;
        cfg.step = StepPolicy::backtracking();
        const auto res = solve_with_refinement(
            p, schedule, cfg, u0.empty() ? std::vector<double>(n0, 0.0) : u0);
        py::list reports;
        for (const auto& l : res.reports) {
          py::dict d;
          d["n_intervals"] = l.n_intervals;
          d["h"] = l.h;
          d["eps"] = l.eps;
          d["eps_over_h"] = l.eps_over_h;
          d["status"] = std::string(to_string(l.status));
          d["iterations"] = l.iterations;
          d["grad_norm"] = l.grad_norm;
          d["stationarity_norm"] = l.stationarity_norm;
          reports.append(d);
        }
        py::dict out;
        out["controls"] = res.trajectory.controls;
        out["reports"] = reports;
        out["aborted"] = res.aborted;
        return out;
      },
      py::arg("problem"), py::arg("n0") = 8, py::arg("levels") = 3, py::arg("ratio") = 1e-4,
      py::arg("max_iterations") = 100000, py::arg("initial_controls") = std::vector<double>{});

  m.def(
      "integrate_hamiltonianized",
      [](const std::string& ode, const std::vector<double>& x0, const std::vector<double>& psi0,
         double t_end, double step, const std::string& integrator) {
        const auto sys = hamiltonianize(builtin_ode(ode));
        const auto how = integrator == "rk4"     ? JointIntegrator::rk4
                         : integrator == "euler" ? JointIntegrator::euler
                                                 : throw InvalidArgument("integrator must be rk4 or euler");
        const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
        const Eigen::VectorXd psi = Eigen::Map<const Eigen::VectorXd>(psi0.data(), static_cast<Eigen::Index>(psi0.size()));
        const auto traj = integrate_joint(sys, x, psi, t_end, step, how);
        std::vector<double> t, h;
        for (const auto& s : traj.samples) {
          t.push_back(s.t);
          h.push_back(s.hamiltonian);
        }
        const auto rep = conservation_report(traj);
        py::dict d;
        d["t"] = t;
        d["hamiltonian"] = h;
        d["max_drift"] = rep.max_drift;
        d["relative_drift"] = rep.relative_drift;
        d["diverged"] = traj.diverged;
        return d;
      },
      py::arg("ode"), py::arg("x0"), py::arg("psi0"), py::arg("t_end") = 1.0,
      py::arg("step") = 1e-3, py::arg("integrator") = "rk4");

  m.def(
      "run_experiment_json",
      [](const std::string& name, const std::string& config_json, bool include_wall_clock) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(e.what());
        }
        const auto report = run_experiment(name, parse_config(j));
        return report_to_json(report, include_wall_clock).dump();
      },
      py::arg("name"), py::arg("config_json") = "{}", py::arg("include_wall_clock") = true,
      "Runs one experiment and returns its report as a JSON string.");

  py::list names;
  for (auto n : kExperimentNames) names.append(std::string(n));
  m.attr("EXPERIMENTS") = py::tuple(names);
}
