#include "hamlab/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "hamlab/errors.hpp"
#include "hamlab/gradient.hpp"

namespace hamlab {

RefinementSchedule RefinementSchedule::doubling(std::size_t n0, std::size_t level_count,
                                                double ratio, double horizon,
                                                std::size_t max_iterations) {
  RefinementSchedule s;
  s.target_ratio = ratio;
  std::size_t n = n0;
  for (std::size_t i = 0; i < level_count; ++i, n *= 2) {
    s.levels.push_back({n, ratio * horizon / static_cast<double>(n), max_iterations});
  }
  return s;
}

void validate(const RefinementSchedule& schedule) {
  if (schedule.levels.empty()) throw InvalidArgument("schedule has no levels");
  if (!(schedule.target_ratio > 0.0)) throw InvalidArgument("target_ratio must be positive");
  for (std::size_t i = 0; i < schedule.levels.size(); ++i) {
    const auto& l = schedule.levels[i];
    if (l.n_intervals == 0) throw InvalidArgument("level N must be positive");
    if (!(l.tolerance > 0.0)) throw InvalidArgument("level tolerance must be positive");
    if (l.max_iterations == 0) throw InvalidArgument("level max_iterations must be positive");
    if (i > 0 && l.n_intervals <= schedule.levels[i - 1].n_intervals) {
      throw InvalidArgument("level N must be strictly increasing");
    }
  }
}

std::vector<std::string> remedy_violations(const RefinementSchedule& schedule, double horizon) {
  std::vector<std::string> out;
  constexpr double slack = 1e-12;
  double prev = 0.0;
  for (std::size_t i = 0; i < schedule.levels.size(); ++i) {
    const auto& l = schedule.levels[i];
    const double ratio = l.tolerance / (horizon / static_cast<double>(l.n_intervals));
    if (i > 0 && ratio > prev * (1.0 + slack)) {
      std::ostringstream os;
      os << "eps/h grows from " << prev << " to " << ratio << " at level " << i;
      out.push_back(os.str());
    }
    prev = ratio;
  }
  if (!schedule.levels.empty() && prev > schedule.target_ratio * (1.0 + slack)) {
    std::ostringstream os;
    os << "final eps/h " << prev << " exceeds target " << schedule.target_ratio;
    out.push_back(os.str());
  }
  return out;
}

std::vector<double> prolong_controls(std::span<const double> coarse_controls,
                                     const UniformGrid& coarse_grid,
                                     const UniformGrid& fine_grid) {
  if (coarse_grid.t0() != fine_grid.t0() || coarse_grid.tf() != fine_grid.tf()) {
    throw InvalidArgument("prolongation between different horizons");
  }
  const std::size_t nc = coarse_grid.intervals();
  const std::size_t nf = fine_grid.intervals();
  if (coarse_controls.size() != nc) throw DimensionError("coarse controls do not match grid");

  std::vector<double> fine(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    std::size_t j;
    if (nf % nc == 0) {
      j = k / (nf / nc);
    } else {
      // Integer form of floor(t_k / h_coarse) on a shared horizon.
      j = (k * nc) / nf;
    }
    fine[k] = coarse_controls[std::min(j, nc - 1)];
  }
  return fine;
}

ConvergenceProbe discretization_convergence_probe(const Trajectory& coarse,
                                                  const UniformGrid& coarse_grid,
                                                  const Trajectory& fine,
                                                  const UniformGrid& fine_grid) {
  const std::size_t nc = coarse_grid.intervals();
  const std::size_t nf = fine_grid.intervals();
  if (coarse.intervals() != nc || fine.intervals() != nf) {
    throw DimensionError("trajectory does not match its grid");
  }
  if (nf < nc || nf % nc != 0 || coarse_grid.t0() != fine_grid.t0() ||
      coarse_grid.tf() != fine_grid.tf()) {
    throw InvalidArgument("grids share no common nodes");
  }
  const std::size_t r = nf / nc;
  ConvergenceProbe p;
  for (std::size_t k = 0; k < nc; ++k) {
    p.control_diff_norm =
        std::max(p.control_diff_norm, std::abs(coarse.controls[k] - fine.controls[r * k]));
  }
  for (std::size_t k = 1; k <= nc; ++k) {
    p.state_diff_norm = std::max(p.state_diff_norm, std::abs(coarse.state(k) - fine.state(r * k)));
  }
  return p;
}

RefinementResult solve_with_refinement(const ScalarOCP& problem,
                                       const RefinementSchedule& schedule,
                                       const SolverConfig& base_config,
                                       std::span<const double> initial_controls_coarse) {
  validate(schedule);
  if (initial_controls_coarse.size() != schedule.levels.front().n_intervals) {
    throw DimensionError("initial controls must match the first level");
  }

  RefinementResult out;
  std::vector<double> controls(initial_controls_coarse.begin(), initial_controls_coarse.end());
  std::optional<UniformGrid> prev_grid;

  for (std::size_t i = 0; i < schedule.levels.size(); ++i) {
    const auto& level = schedule.levels[i];
    const UniformGrid grid = UniformGrid::over(problem, level.n_intervals);
    if (prev_grid) controls = prolong_controls(controls, *prev_grid, grid);

    SolverConfig cfg = base_config;
    cfg.tolerance = level.tolerance;
    cfg.max_iterations = level.max_iterations;
    auto solved = solve_direct(problem, grid, controls, cfg);

    LevelReport rep;
    rep.level = i;
    rep.n_intervals = level.n_intervals;
    rep.h = grid.h();
    rep.eps = level.tolerance;
    rep.eps_over_h = level.tolerance / grid.h();
    rep.status = solved.trace.status;
    rep.iterations = solved.trace.iterations();

    if (solved.trace.status == SolveStatus::diverged) {
      out.reports.push_back(rep);
      out.aborted = true;
      out.message = "level " + std::to_string(i) + " diverged: " + solved.trace.message;
      return out;
    }

    controls = std::move(solved.controls);
    const GradientReport g = adjoint_gradient(problem, grid, controls);
    const IndirectResiduals res = indirect_residuals(problem, grid, g.trajectory, g.costates);
    rep.final_cost = g.cost;
    rep.grad_norm = g.grad_inf_norm;
    rep.stationarity_norm = g.stationarity_inf_norm;
    rep.residual_state_norm = res.state_norm;
    rep.residual_adjoint_norm = res.adjoint_norm;
    rep.residual_stationarity_norm = res.stationarity_norm;
    out.reports.push_back(rep);
    out.level_controls.push_back(controls);

    out.trajectory = g.trajectory;
    out.costates = g.costates;
    prev_grid = grid;
  }
  return out;
}

}  // namespace hamlab
