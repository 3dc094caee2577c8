#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hamlab/euler.hpp"
#include "hamlab/problem.hpp"
#include "hamlab/solvers.hpp"

namespace hamlab {

struct RefinementLevel {
  std::size_t n_intervals = 0;
  double tolerance = 0.0;
  std::size_t max_iterations = 0;
};

/// Sequence of (N_i, eps_i, m_i) levels. The accuracy remedy keeps
/// eps_i / h_i non-increasing and ends at or below `target_ratio`.
struct RefinementSchedule {
  std::vector<RefinementLevel> levels;
  double target_ratio = 1e-4;

  // N doubles per level, eps_i = ratio * h_i.
  static RefinementSchedule doubling(std::size_t n0, std::size_t level_count, double ratio,
                                     double horizon, std::size_t max_iterations);
};

// Structural checks; throws InvalidArgument (empty, zero N, N not increasing, eps <= 0).
void validate(const RefinementSchedule& schedule);

// Violations of the eps/h remedy invariants (empty when the schedule is coordinated).
std::vector<std::string> remedy_violations(const RefinementSchedule& schedule, double horizon);

struct LevelReport {
  std::size_t level = 0;
  std::size_t n_intervals = 0;
  double h = 0.0;
  double eps = 0.0;
  double eps_over_h = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
  std::size_t iterations = 0;
  double final_cost = 0.0;
  double grad_norm = 0.0;
  double stationarity_norm = 0.0;
  double residual_state_norm = 0.0;
  double residual_adjoint_norm = 0.0;
  double residual_stationarity_norm = 0.0;
};

struct RefinementResult {
  Trajectory trajectory;
  CostateTrajectory costates;
  std::vector<LevelReport> reports;
  std::vector<std::vector<double>> level_controls;
  bool aborted = false;
  std::string message;
};

/// Warm-started inner solves over the schedule. Divergence at a level stops
/// the run and returns the reports gathered so far with `aborted` set.
RefinementResult solve_with_refinement(const ScalarOCP& problem,
                                       const RefinementSchedule& schedule,
                                       const SolverConfig& base_config,
                                       std::span<const double> initial_controls_coarse);

// Piecewise-constant: a fine node takes the coarse control of the interval containing it.
std::vector<double> prolong_controls(std::span<const double> coarse_controls,
                                     const UniformGrid& coarse_grid,
                                     const UniformGrid& fine_grid);

struct ConvergenceProbe {
  double control_diff_norm = 0.0;
  double state_diff_norm = 0.0;
};

// Compares two solutions at the coarse grid's nodes; the fine N must be a multiple of the coarse N.
ConvergenceProbe discretization_convergence_probe(const Trajectory& coarse,
                                                  const UniformGrid& coarse_grid,
                                                  const Trajectory& fine,
                                                  const UniformGrid& fine_grid);

}  // namespace hamlab
