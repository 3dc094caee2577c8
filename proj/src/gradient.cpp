#include "hamlab/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hamlab/errors.hpp"

namespace hamlab {

namespace {

template <typename Grid>
GradientReport assemble(const ScalarOCP& problem, const Grid& grid,
                        std::span<const double> controls, auto step_at) {
  GradientReport r;
  r.trajectory = forward_simulate(problem, grid, controls);
  r.costates = backward_adjoint(problem, grid, r.trajectory);
  r.stationarity = hamiltonian_gradient_stack(problem, r.trajectory, r.costates);
  r.cost = problem.endpoint_cost(r.trajectory.terminal());
  r.gradient.resize(r.stationarity.size());
  for (std::size_t k = 0; k < r.gradient.size(); ++k) {
    r.gradient[k] = step_at(k) * r.stationarity[k];
  }
  r.grad_inf_norm = inf_norm(r.gradient);
  r.stationarity_inf_norm = inf_norm(r.stationarity);
  return r;
}

}  // namespace

double reduced_cost(const ScalarOCP& problem, const UniformGrid& grid,
                    std::span<const double> controls) {
  return problem.endpoint_cost(forward_simulate(problem, grid, controls).terminal());
}

double reduced_cost(const ScalarOCP& problem, const NonuniformGrid& grid,
                    std::span<const double> controls) {
  return problem.endpoint_cost(forward_simulate(problem, grid, controls).terminal());
}

GradientReport adjoint_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                std::span<const double> controls) {
  const double h = grid.h();
  return assemble(problem, grid, controls, [h](std::size_t) { return h; });
}

GradientReport adjoint_gradient(const ScalarOCP& problem, const NonuniformGrid& grid,
                                std::span<const double> controls) {
  const auto& steps = grid.steps();
  return assemble(problem, grid, controls, [&steps](std::size_t k) { return steps[k]; });
}

std::vector<double> central_difference_gradient(const ScalarField& fn,
                                                std::span<const double> point, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  std::vector<double> probe(point.begin(), point.end());
  std::vector<double> grad(point.size());
  for (std::size_t k = 0; k < point.size(); ++k) {
    const double up = point[k] + step;
    const double dn = point[k] - step;
    probe[k] = up;
    const double f_up = fn(probe);
    probe[k] = dn;
    const double f_dn = fn(probe);
    probe[k] = point[k];
    grad[k] = (f_up - f_dn) / (up - dn);
  }
  return grad;
}

std::vector<double> fd_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                std::span<const double> controls, double fd_step) {
  return central_difference_gradient(
      [&](std::span<const double> u) { return reduced_cost(problem, grid, u); }, controls,
      fd_step);
}

std::vector<double> fd_gradient(const ScalarOCP& problem, const NonuniformGrid& grid,
                                std::span<const double> controls, double fd_step) {
  return central_difference_gradient(
      [&](std::span<const double> u) { return reduced_cost(problem, grid, u); }, controls,
      fd_step);
}

// ---------------------------------------------------------------------------
// Control bases

ControlBasis ControlBasis::constant() {
  return {"constant", 1, [](std::size_t, std::size_t, double) { return 1.0; }};
}

ControlBasis ControlBasis::monomial(std::size_t degree_count) {
  return {"monomial", degree_count,
          [](std::size_t j, std::size_t, double t) { return std::pow(t, static_cast<double>(j)); }};
}

ControlBasis ControlBasis::indicator(std::size_t n) {
  return {"indicator", n,
          [](std::size_t j, std::size_t k, double) { return j == k ? 1.0 : 0.0; }};
}

ControlBasis ControlBasis::duplicated(const ControlBasis& base) {
  auto sample = base.sample;
  return {"duplicated_" + base.name, 2 * base.size,
          [sample](std::size_t j, std::size_t k, double t) { return sample(j / 2, k, t); }};
}

ControlBasis ControlBasis::alternating_halves(std::size_t n) {
  return {"alternating_halves", 1,
          [n](std::size_t, std::size_t k, double) { return 2 * k < n ? 1.0 : -1.0; }};
}

ControlBasis ControlBasis::zero(std::size_t m) {
  return {"zero", m, [](std::size_t, std::size_t, double) { return 0.0; }};
}

Eigen::MatrixXd sample_matrix(const ControlBasis& basis, const UniformGrid& grid) {
  if (basis.size == 0 || !basis.sample) throw InvalidArgument("empty control basis");
  const auto n = static_cast<Eigen::Index>(grid.intervals());
  const auto m = static_cast<Eigen::Index>(basis.size);
  Eigen::MatrixXd b(n, m);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = grid.node(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < m; ++j) {
      b(k, j) = basis.sample(static_cast<std::size_t>(j), static_cast<std::size_t>(k), t);
    }
  }
  return b;
}

ParameterizedGradient parameterized_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                             const ControlBasis& basis,
                                             std::span<const double> coeffs) {
  if (coeffs.size() != basis.size) {
    throw DimensionError("expected " + std::to_string(basis.size) + " coefficients, got " +
                         std::to_string(coeffs.size()));
  }
  const Eigen::MatrixXd b = sample_matrix(basis, grid);
  const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
  const Eigen::VectorXd u = b * c;

  ParameterizedGradient out;
  out.controls.assign(u.data(), u.data() + u.size());
  out.inner = adjoint_gradient(problem, grid, out.controls);
  const Eigen::Map<const Eigen::VectorXd> g(out.inner.gradient.data(), u.size());
  const Eigen::VectorXd gc = b.transpose() * g;
  out.coeff_gradient.assign(gc.data(), gc.data() + gc.size());
  return out;
}

RankCheck basis_rank_check(const ControlBasis& basis, const UniformGrid& grid) {
  if (basis.size > grid.intervals()) {
    throw DimensionError("basis of size " + std::to_string(basis.size) +
                         " over-parameterizes a grid of " + std::to_string(grid.intervals()) +
                         " controls");
  }
  const Eigen::MatrixXd b = sample_matrix(basis, grid);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
  const Eigen::VectorXd s = svd.singularValues();
  RankCheck out;
  out.singular_values.assign(s.data(), s.data() + s.size());
  const double cutoff = s.size() > 0 ? 1e-10 * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++out.rank;
  }
  out.full_rank = out.rank == basis.size;
  return out;
}

// ---------------------------------------------------------------------------
// Equivalence and accuracy

EquivalenceVerdict verify_equivalence_with_costates(const ScalarOCP& problem,
                                                    const UniformGrid& grid,
                                                    std::span<const double> controls,
                                                    const CostateTrajectory& costates,
                                                    double fd_step, double fd_tolerance) {
  const double h = grid.h();
  const GradientReport adjoint = adjoint_gradient(problem, grid, controls);
  const auto stationarity = hamiltonian_gradient_stack(problem, adjoint.trajectory, costates);

  EquivalenceVerdict v;
  v.fd_tolerance = fd_tolerance;
  v.fd_gradient = fd_gradient(problem, grid, controls, fd_step);
  v.scaled_stationarity.resize(stationarity.size());
  for (std::size_t k = 0; k < stationarity.size(); ++k) {
    v.scaled_stationarity[k] = h * stationarity[k];
  }

  double diff = 0.0;
  for (std::size_t k = 0; k < v.fd_gradient.size(); ++k) {
    const double d = std::abs(v.fd_gradient[k] - v.scaled_stationarity[k]);
    if (!(d <= diff) && !std::isnan(diff)) diff = d;
  }
  v.fd_deviation = diff / std::max(1.0, inf_norm(v.scaled_stationarity));
  v.fd_passed = v.fd_deviation <= fd_tolerance;

  constexpr double eps = std::numeric_limits<double>::epsilon();
  v.identity_passed = true;
  for (std::size_t k = 0; k < stationarity.size(); ++k) {
    const double d = std::abs(adjoint.gradient[k] - v.scaled_stationarity[k]);
    if (!(d <= v.identity_defect) && !std::isnan(v.identity_defect)) v.identity_defect = d;
    if (!(d <= 4 * eps * std::abs(adjoint.gradient[k]))) v.identity_passed = false;
  }
  v.passed = v.fd_passed && v.identity_passed;
  return v;
}

EquivalenceVerdict verify_equivalence(const ScalarOCP& problem, const UniformGrid& grid,
                                      std::span<const double> controls, double fd_step,
                                      double fd_tolerance) {
  const auto traj = forward_simulate(problem, grid, controls);
  const auto costates = backward_adjoint(problem, grid, traj);
  return verify_equivalence_with_costates(problem, grid, controls, costates, fd_step,
                                          fd_tolerance);
}

double stationarity_bound(double epsilon, double h) {
  if (!(h > 0.0)) throw InvalidArgument("step size must be positive");
  return epsilon / h;
}

StationarityBound theorem1_bound(const GradientReport& report, const UniformGrid& grid) {
  StationarityBound b;
  b.epsilon = report.grad_inf_norm;
  b.bound = stationarity_bound(b.epsilon, grid.h());
  b.max_stationarity = report.stationarity_inf_norm;
  b.satisfied =
      b.max_stationarity <= b.bound * (1.0 + 4 * std::numeric_limits<double>::epsilon());
  return b;
}

// ---------------------------------------------------------------------------
// Adaptive grids

std::string_view to_string(AdaptationRule rule) {
  switch (rule) {
    case AdaptationRule::identity:
      return "identity";
    case AdaptationRule::arclength:
      return "arclength";
  }
  throw InvalidArgument("unknown adaptation rule");
}

AdaptationRule parse_adaptation_rule(std::string_view name) {
  if (name == "identity") return AdaptationRule::identity;
  if (name == "arclength") return AdaptationRule::arclength;
  throw InvalidArgument("unknown adaptation rule '" + std::string(name) + "'");
}

NonuniformGrid adapt_grid(const ScalarOCP& problem, AdaptationRule rule,
                          std::span<const double> controls) {
  if (controls.empty()) throw DimensionError("adaptation needs at least one control");
  const UniformGrid uniform = UniformGrid::over(problem, controls.size());
  switch (rule) {
    case AdaptationRule::identity:
      return NonuniformGrid(uniform);
    case AdaptationRule::arclength: {
      const Trajectory traj = forward_simulate(problem, uniform, controls);
      std::vector<double> steps(controls.size());
      double total = 0.0;
      for (std::size_t k = 0; k < steps.size(); ++k) {
        steps[k] = 1.0 / (1.0 + std::abs(problem.dynamics(traj.state(k), controls[k])));
        total += steps[k];
      }
      const double scale = problem.horizon() / total;
      for (double& s : steps) s *= scale;
      return NonuniformGrid::from_steps(problem.t0, std::move(steps));
    }
  }
  throw InvalidArgument("unknown adaptation rule");
}

AdaptiveDecomposition adaptive_gradient_decomposition(const ScalarOCP& problem,
                                                      AdaptationRule rule,
                                                      std::span<const double> controls,
                                                      double fd_step) {
  NonuniformGrid grid = adapt_grid(problem, rule, controls);
  const GradientReport frozen = adjoint_gradient(problem, grid, controls);
  auto true_fd = central_difference_gradient(
      [&](std::span<const double> u) {
        return reduced_cost(problem, adapt_grid(problem, rule, u), u);
      },
      controls, fd_step);

  double noise = 0.0;
  for (std::size_t k = 0; k < true_fd.size(); ++k) {
    const double d = std::abs(true_fd[k] - frozen.gradient[k]);
    if (!(d <= noise) && !std::isnan(noise)) noise = d;
  }
  return {std::move(grid), frozen.gradient, std::move(true_fd), noise};
}

}  // namespace hamlab
