#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hamlab/problem.hpp"

namespace hamlab {

// |x_k| above this aborts propagation.
inline constexpr double kDivergenceThreshold = 1e12;

/// Uniform mesh t_k = t0 + k h, k = 0..N, with h = (tf - t0) / N.
class UniformGrid {
 public:
  UniformGrid(double t0, double tf, std::size_t n_intervals);
  static UniformGrid over(const ScalarOCP& problem, std::size_t n_intervals) {
    return UniformGrid(problem.t0, problem.tf, n_intervals);
  }

  double t0() const { return t0_; }
  double tf() const { return tf_; }
  std::size_t intervals() const { return n_; }
  double h() const { return h_; }
  double node(std::size_t k) const { return t0_ + static_cast<double>(k) * h_; }

 private:
  double t0_;
  double tf_;
  std::size_t n_;
  double h_;
};

/// Strictly increasing mesh t_0 < ... < t_N with steps h_k = t_{k+1} - t_k.
class NonuniformGrid {
 public:
  explicit NonuniformGrid(std::vector<double> nodes);
  // Every step is exactly grid.h(), so simulations agree bit-for-bit with the uniform path.
  explicit NonuniformGrid(const UniformGrid& grid);
  // Nodes are accumulated from t0.
  static NonuniformGrid from_steps(double t0, std::vector<double> steps);

  std::size_t intervals() const { return steps_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& steps() const { return steps_; }
  double t0() const { return nodes_.front(); }
  double tf() const { return nodes_.back(); }

 private:
  NonuniformGrid() = default;
  std::vector<double> nodes_;
  std::vector<double> steps_;
};

/// Discretized primal pair. states holds x_1..x_N, controls holds u_0..u_{N-1};
/// there is no u_N.
struct Trajectory {
  double x0 = 0.0;
  std::vector<double> states;
  std::vector<double> controls;

  std::size_t intervals() const { return controls.size(); }
  // x_k for k = 0..N.
  double state(std::size_t k) const { return k == 0 ? x0 : states[k - 1]; }
  double terminal() const { return states.empty() ? x0 : states.back(); }
};

/// lambda_0..lambda_{N-1}; there is no lambda_N.
struct CostateTrajectory {
  std::vector<double> costates;
  std::size_t size() const { return costates.size(); }
};

// x_{k+1} = x_k + h_k f(x_k, u_k). Throws PropagationDiverged on |x| > 1e12 or non-finite x.
Trajectory forward_simulate(const ScalarOCP& problem, const UniformGrid& grid,
                            std::span<const double> controls);
Trajectory forward_simulate(const ScalarOCP& problem, const NonuniformGrid& grid,
                            std::span<const double> controls);

// lambda_{N-1} = dE/dx(x_N); lambda_k = lambda_{k+1} + h_{k+1} lambda_{k+1} df/dx(x_{k+1}, u_{k+1}).
CostateTrajectory backward_adjoint(const ScalarOCP& problem, const UniformGrid& grid,
                                   const Trajectory& traj);
CostateTrajectory backward_adjoint(const ScalarOCP& problem, const NonuniformGrid& grid,
                                   const Trajectory& traj);

// Entry k is lambda_k df/du(x_k, u_k).
std::vector<double> hamiltonian_gradient_stack(const ScalarOCP& problem, const Trajectory& traj,
                                               const CostateTrajectory& costates);

struct IndirectResiduals {
  std::vector<double> state;         // N entries
  std::vector<double> adjoint;       // N-1 entries
  double transversality = 0.0;       // lambda_{N-1} - dE/dx(x_N)
  std::vector<double> stationarity;  // N entries
  double state_norm = 0.0;
  double adjoint_norm = 0.0;  // includes the transversality residual
  double stationarity_norm = 0.0;
};

/// Residuals of the forward/backward Euler necessary conditions on a uniform grid.
/// Three zero norms certify a discrete extremal.
IndirectResiduals indirect_residuals(const ScalarOCP& problem, const UniformGrid& grid,
                                     const Trajectory& traj, const CostateTrajectory& costates);

double inf_norm(std::span<const double> v);

}  // namespace hamlab
