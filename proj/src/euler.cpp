#include "hamlab/euler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hamlab/errors.hpp"

namespace hamlab {

UniformGrid::UniformGrid(double t0, double tf, std::size_t n_intervals)
    : t0_(t0), tf_(tf), n_(n_intervals), h_(0.0) {
  if (n_intervals == 0) throw InvalidArgument("grid needs at least one interval");
  if (!(tf > t0)) throw InvalidArgument("grid needs tf > t0");
  h_ = (tf - t0) / static_cast<double>(n_intervals);
}

NonuniformGrid::NonuniformGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw DegenerateGrid("grid needs at least two nodes");
  steps_.resize(nodes_.size() - 1);
  for (std::size_t k = 0; k + 1 < nodes_.size(); ++k) {
    steps_[k] = nodes_[k + 1] - nodes_[k];
    if (!(steps_[k] > 0.0) || !std::isfinite(steps_[k])) {
      throw DegenerateGrid("grid nodes not strictly increasing at index " + std::to_string(k));
    }
  }
}

NonuniformGrid::NonuniformGrid(const UniformGrid& grid) {
  const std::size_t n = grid.intervals();
  steps_.assign(n, grid.h());
  nodes_.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) nodes_[k] = grid.node(k);
  nodes_.back() = grid.tf();
}

NonuniformGrid NonuniformGrid::from_steps(double t0, std::vector<double> steps) {
  if (steps.empty()) throw DegenerateGrid("grid needs at least one step");
  NonuniformGrid g;
  g.nodes_.resize(steps.size() + 1);
  g.nodes_[0] = t0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (!(steps[k] > 0.0) || !std::isfinite(steps[k])) {
      throw DegenerateGrid("non-positive step at index " + std::to_string(k));
    }
    g.nodes_[k + 1] = g.nodes_[k] + steps[k];
  }
  g.steps_ = std::move(steps);
  return g;
}

namespace {

template <typename StepAt>
Trajectory simulate(const ScalarOCP& problem, std::size_t n, StepAt step_at,
                    std::span<const double> controls) {
  if (controls.size() != n) {
    throw DimensionError("expected " + std::to_string(n) + " controls, got " +
                         std::to_string(controls.size()));
  }
  Trajectory traj;
  traj.x0 = problem.x0;
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.resize(n);
  double x = problem.x0;
  for (std::size_t k = 0; k < n; ++k) {
    x = x + step_at(k) * problem.dynamics(x, controls[k]);
    if (!std::isfinite(x) || std::abs(x) > kDivergenceThreshold) {
      throw PropagationDiverged(k + 1, x);
    }
    traj.states[k] = x;
  }
  return traj;
}

template <typename StepAt>
CostateTrajectory back_propagate(const ScalarOCP& problem, std::size_t n, StepAt step_at,
                                 const Trajectory& traj) {
  if (traj.controls.size() != n || traj.states.size() != n) {
    throw DimensionError("trajectory length does not match grid");
  }
  CostateTrajectory out;
  out.costates.resize(n);
  double lam = problem.endpoint_cost_dx(traj.terminal());
  if (!std::isfinite(lam)) throw AdjointDiverged(n - 1, lam);
  out.costates[n - 1] = lam;
  for (std::size_t k = n - 1; k-- > 0;) {
    const double x_next = traj.state(k + 1);
    const double u_next = traj.controls[k + 1];
    lam = lam + step_at(k + 1) * lam * problem.dynamics_dx(x_next, u_next);
    if (!std::isfinite(lam) || std::abs(lam) > kDivergenceThreshold) {
      throw AdjointDiverged(k, lam);
    }
    out.costates[k] = lam;
  }
  return out;
}

}  // namespace

Trajectory forward_simulate(const ScalarOCP& problem, const UniformGrid& grid,
                            std::span<const double> controls) {
  const double h = grid.h();
  return simulate(problem, grid.intervals(), [h](std::size_t) { return h; }, controls);
}

Trajectory forward_simulate(const ScalarOCP& problem, const NonuniformGrid& grid,
                            std::span<const double> controls) {
  const auto& steps = grid.steps();
  return simulate(problem, grid.intervals(), [&steps](std::size_t k) { return steps[k]; },
                  controls);
}

CostateTrajectory backward_adjoint(const ScalarOCP& problem, const UniformGrid& grid,
                                   const Trajectory& traj) {
  const double h = grid.h();
  return back_propagate(problem, grid.intervals(), [h](std::size_t) { return h; }, traj);
}

CostateTrajectory backward_adjoint(const ScalarOCP& problem, const NonuniformGrid& grid,
                                   const Trajectory& traj) {
  const auto& steps = grid.steps();
  return back_propagate(problem, grid.intervals(), [&steps](std::size_t k) { return steps[k]; },
                        traj);
}

std::vector<double> hamiltonian_gradient_stack(const ScalarOCP& problem, const Trajectory& traj,
                                               const CostateTrajectory& costates) {
  const std::size_t n = traj.intervals();
  if (costates.size() != n || traj.states.size() != n) {
    throw DimensionError("costate/trajectory length mismatch");
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = hamiltonian_du(problem, costates.costates[k], traj.state(k), traj.controls[k]);
  }
  return out;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) {
    const double a = std::abs(x);
    if (!(a <= m) && !std::isnan(m)) m = a;
  }
  return m;
}

IndirectResiduals indirect_residuals(const ScalarOCP& problem, const UniformGrid& grid,
                                     const Trajectory& traj, const CostateTrajectory& costates) {
  const std::size_t n = grid.intervals();
  if (traj.controls.size() != n || traj.states.size() != n || costates.size() != n) {
    throw DimensionError("residual inputs do not match grid length");
  }
  const double h = grid.h();
  IndirectResiduals r;
  r.state.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double xk = traj.state(k);
    r.state[k] = traj.state(k + 1) - (xk + h * problem.dynamics(xk, traj.controls[k]));
  }
  r.adjoint.resize(n - 1);
  const auto& lam = costates.costates;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double fx = problem.dynamics_dx(traj.state(k + 1), traj.controls[k + 1]);
    r.adjoint[k] = lam[k] - (lam[k + 1] + h * lam[k + 1] * fx);
  }
  r.transversality = lam[n - 1] - problem.endpoint_cost_dx(traj.terminal());
  r.stationarity = hamiltonian_gradient_stack(problem, traj, costates);

  r.state_norm = inf_norm(r.state);
  r.adjoint_norm = std::max(inf_norm(r.adjoint), std::abs(r.transversality));
  r.stationarity_norm = inf_norm(r.stationarity);
  return r;
}

}  // namespace hamlab
