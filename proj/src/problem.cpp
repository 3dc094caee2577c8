#include "hamlab/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hamlab/errors.hpp"

namespace hamlab {

std::string_view to_string(TestProblemId id) {
  switch (id) {
    case TestProblemId::linear_integrator:
      return "linear_integrator";
    case TestProblemId::damped_linear:
      return "damped_linear";
    case TestProblemId::bilinear:
      return "bilinear";
    case TestProblemId::cubic_drag:
      return "cubic_drag";
  }
  throw InvalidArgument("unknown test problem id");
}

TestProblemId parse_problem_id(std::string_view name) {
  for (auto id : kAllTestProblems) {
    if (to_string(id) == name) return id;
  }
  throw InvalidArgument("unknown test problem '" + std::string(name) + "'");
}

namespace {

ScalarOCP with_quadratic_cost(std::string name, double target) {
  ScalarOCP p;
  p.name = std::move(name);
  p.endpoint_cost = [target](double x) { return 0.5 * (x - target) * (x - target); };
  p.endpoint_cost_dx = [target](double x) { return x - target; };
  p.x0 = 1.0;
  p.t0 = 0.0;
  p.tf = 1.0;
  return p;
}

}  // namespace

ScalarOCP builtin_problem(TestProblemId id) {
  switch (id) {
    case TestProblemId::linear_integrator: {
      auto p = with_quadratic_cost("linear_integrator", 0.0);
      p.dynamics = [](double, double u) { return u; };
      p.dynamics_dx = [](double, double) { return 0.0; };
      p.dynamics_du = [](double, double) { return 1.0; };
      return p;
    }
    case TestProblemId::damped_linear: {
      auto p = with_quadratic_cost("damped_linear", 0.0);
      p.dynamics = [](double x, double u) { return -x + u; };
      p.dynamics_dx = [](double, double) { return -1.0; };
      p.dynamics_du = [](double, double) { return 1.0; };
      return p;
    }
    case TestProblemId::bilinear: {
      auto p = with_quadratic_cost("bilinear", 0.0);
      p.dynamics = [](double x, double u) { return x * u; };
      p.dynamics_dx = [](double, double u) { return u; };
      p.dynamics_du = [](double x, double) { return x; };
      return p;
    }
    case TestProblemId::cubic_drag: {
      auto p = with_quadratic_cost("cubic_drag", 0.5);
      p.dynamics = [](double x, double u) { return -x * x * x + u; };
      p.dynamics_dx = [](double x, double) { return -3.0 * x * x; };
      p.dynamics_du = [](double, double) { return 1.0; };
      return p;
    }
  }
  throw InvalidArgument("unknown test problem id");
}

void validate(const ScalarOCP& problem) {
  if (!(problem.tf > problem.t0)) {
    throw InvalidArgument("problem '" + problem.name + "': tf must exceed t0");
  }
  if (!problem.dynamics || !problem.dynamics_dx || !problem.dynamics_du ||
      !problem.endpoint_cost || !problem.endpoint_cost_dx) {
    throw InvalidArgument("problem '" + problem.name + "': missing function");
  }
}

double hamiltonian(const ScalarOCP& problem, double lam, double x, double u) {
  return lam * problem.dynamics(x, u);
}

double hamiltonian_du(const ScalarOCP& problem, double lam, double x, double u) {
  return lam * problem.dynamics_du(x, u);
}

DerivativeCheckReport check_derivatives(const ScalarOCP& problem, std::size_t probes,
                                        std::uint64_t seed) {
  if (probes == 0) throw InvalidArgument("check_derivatives needs at least one probe");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);

  // Keeps NaN sticky, unlike std::max.
  auto track = [](double& worst, double analytic, double fd) {
    const double e = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
    if (!(e <= worst) && !std::isnan(worst)) worst = e;
  };

  DerivativeCheckReport report;
  report.probes = probes;
  for (std::size_t i = 0; i < probes; ++i) {
    const double x = dist(rng);
    const double u = dist(rng);
    const double dx = 1e-6 * std::max(1.0, std::abs(x));
    const double du = 1e-6 * std::max(1.0, std::abs(u));

    const double fd_fx = (problem.dynamics(x + dx, u) - problem.dynamics(x - dx, u)) / (2 * dx);
    const double fd_fu = (problem.dynamics(x, u + du) - problem.dynamics(x, u - du)) / (2 * du);
    const double fd_ex = (problem.endpoint_cost(x + dx) - problem.endpoint_cost(x - dx)) / (2 * dx);

    track(report.max_rel_error_dynamics_dx, problem.dynamics_dx(x, u), fd_fx);
    track(report.max_rel_error_dynamics_du, problem.dynamics_du(x, u), fd_fu);
    track(report.max_rel_error_endpoint_cost_dx, problem.endpoint_cost_dx(x), fd_ex);
  }
  report.passed = report.max_rel_error_dynamics_dx <= report.tolerance &&
                  report.max_rel_error_dynamics_du <= report.tolerance &&
                  report.max_rel_error_endpoint_cost_dx <= report.tolerance;
  return report;
}

}  // namespace hamlab
