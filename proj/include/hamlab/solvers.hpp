#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hamlab/euler.hpp"
#include "hamlab/gradient.hpp"
#include "hamlab/problem.hpp"

namespace hamlab {

// Preconditioner M in U <- U - alpha M^{-1} g.
enum class Method { gradient, newton, quasi_newton };

// direct: step along dE/dU. indirect_variational: step along the dH/du stack.
enum class Mode { direct, indirect_variational };

struct StepPolicy {
  enum class Kind { fixed, compensated, backtracking };
  Kind kind = Kind::fixed;
  double alpha = 1.0;  // fixed
  double alpha0 = 1.0;  // backtracking
  double shrink = 0.5;
  double armijo_c = 1e-4;

  static StepPolicy fixed(double alpha) { return {Kind::fixed, alpha}; }
  // alpha * h = 1 in direct mode; gamma = 1 in indirect mode.
  static StepPolicy compensated() { return {Kind::compensated}; }
  static StepPolicy backtracking(double alpha0 = 1.0, double shrink = 0.5,
                                 double armijo_c = 1e-4) {
    return {Kind::backtracking, 1.0, alpha0, shrink, armijo_c};
  }
};

struct SolverConfig {
  Method method = Method::gradient;
  StepPolicy step = StepPolicy::fixed(1.0);
  double tolerance = 1e-8;
  std::size_t max_iterations = 1000;
  // Newton damping. Unset means 1e-8 * (1 + ||H||_inf).
  std::optional<double> hessian_regularization_mu;
  Mode mode = Mode::direct;
  // Probe size for finite-difference Hessians.
  double hessian_fd_step = 1e-5;
};

std::string_view to_string(Method m);
std::string_view to_string(Mode m);
std::string_view to_string(StepPolicy::Kind k);
Method parse_method(std::string_view s);
Mode parse_mode(std::string_view s);
StepPolicy::Kind parse_step_kind(std::string_view s);

// Throws InvalidArgument on out-of-range settings.
void validate(const SolverConfig& config);

enum class SolveStatus { converged, max_iterations, diverged, stalled };
std::string_view to_string(SolveStatus s);

struct IterationRecord {
  std::size_t iteration = 0;
  double cost = 0.0;
  double grad_inf_norm = 0.0;
  double stationarity_inf_norm = 0.0;
  // Step length that produced this iterate; 0 for the initial point.
  double step_length = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  SolveStatus status = SolveStatus::max_iterations;
  std::vector<std::string> warnings;
  std::string message;

  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
  bool converged() const { return status == SolveStatus::converged; }
};

struct DirectSolveResult {
  std::vector<double> controls;
  IterationTrace trace;
  std::vector<std::vector<double>> iterates;  // filled when record_iterates is set
};

/// Runs U_{i+1} = U_i - alpha_i M^{-1} g_i with the adjoint-route gradient.
/// In indirect_variational mode the step is taken along the dH/du stack
/// instead and convergence is tested on ||dH/du||_inf.
DirectSolveResult solve_direct(const ScalarOCP& problem, const UniformGrid& grid,
                               std::span<const double> initial_controls,
                               const SolverConfig& config, bool record_iterates = false);

struct ParameterizedSolveResult {
  std::vector<double> coeffs;
  std::vector<double> controls;
  IterationTrace trace;
  RankCheck rank;
  // ||dE/dU||_inf at the final coefficients, which need not vanish for a rank-deficient basis.
  double inner_grad_inf_norm = 0.0;
  std::vector<std::vector<double>> iterates;  // coefficient iterates
};

// Same family on the coefficients of `basis`; stops on ||dE/dC||_inf <= tolerance.
ParameterizedSolveResult solve_parameterized(const ScalarOCP& problem, const UniformGrid& grid,
                                             const ControlBasis& basis,
                                             std::span<const double> initial_coeffs,
                                             const SolverConfig& config,
                                             bool record_iterates = false);

// Central differences of the adjoint gradient, symmetrized as (H + H^T) / 2.
Eigen::MatrixXd newton_hessian(const ScalarOCP& problem, const UniformGrid& grid,
                               std::span<const double> controls, double fd_step = 1e-5);

enum class FlowMetric { identity, newton };
std::string_view to_string(FlowMetric m);
FlowMetric parse_flow_metric(std::string_view s);

struct FlowTrace {
  std::vector<double> tau;
  std::vector<double> grad_inf_norm;
  std::vector<double> controls;
  bool diverged = false;
  bool monotone_decrease = true;
  std::string message;
};

/// Forward Euler on dU/dtau = -M^{-1} dE/dU with the given substep (the last
/// substep is shortened to land on tau_end). Divergence (norm above 1e12 or a
/// failed simulation) is recorded in the trace, not thrown.
FlowTrace integrate_gradient_flow(const ScalarOCP& problem, const UniformGrid& grid,
                                  std::span<const double> initial_controls, FlowMetric metric,
                                  double tau_end, double substep);

}  // namespace hamlab
