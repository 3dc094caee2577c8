#include "hamlab/solvers.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "hamlab/errors.hpp"

namespace hamlab {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::gradient:
      return "gradient";
    case Method::newton:
      return "newton";
    case Method::quasi_newton:
      return "quasi_newton";
  }
  return "?";
}

std::string_view to_string(Mode m) {
  return m == Mode::direct ? "direct" : "indirect_variational";
}

std::string_view to_string(StepPolicy::Kind k) {
  switch (k) {
    case StepPolicy::Kind::fixed:
      return "fixed";
    case StepPolicy::Kind::compensated:
      return "compensated";
    case StepPolicy::Kind::backtracking:
      return "backtracking";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "gradient") return Method::gradient;
  if (s == "newton") return Method::newton;
  if (s == "quasi_newton") return Method::quasi_newton;
  throw InvalidArgument("unknown method '" + std::string(s) + "'");
}

Mode parse_mode(std::string_view s) {
  if (s == "direct") return Mode::direct;
  if (s == "indirect_variational") return Mode::indirect_variational;
  throw InvalidArgument("unknown mode '" + std::string(s) + "'");
}

StepPolicy::Kind parse_step_kind(std::string_view s) {
  if (s == "fixed") return StepPolicy::Kind::fixed;
  if (s == "compensated") return StepPolicy::Kind::compensated;
  if (s == "backtracking") return StepPolicy::Kind::backtracking;
  throw InvalidArgument("unknown step policy '" + std::string(s) + "'");
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged:
      return "converged";
    case SolveStatus::max_iterations:
      return "max_iterations";
    case SolveStatus::diverged:
      return "diverged";
    case SolveStatus::stalled:
      return "stalled";
  }
  return "?";
}

std::string_view to_string(FlowMetric m) { return m == FlowMetric::identity ? "identity" : "newton"; }

FlowMetric parse_flow_metric(std::string_view s) {
  if (s == "identity") return FlowMetric::identity;
  if (s == "newton") return FlowMetric::newton;
  throw InvalidArgument("unknown flow metric '" + std::string(s) + "'");
}

void validate(const SolverConfig& config) {
  const auto& st = config.step;
  if (st.kind == StepPolicy::Kind::fixed && !(st.alpha > 0.0)) {
    throw InvalidArgument("fixed step needs alpha > 0");
  }
  if (st.kind == StepPolicy::Kind::backtracking) {
    if (!(st.alpha0 > 0.0)) throw InvalidArgument("backtracking needs alpha0 > 0");
    if (!(st.shrink > 0.0 && st.shrink < 1.0)) throw InvalidArgument("shrink must lie in (0,1)");
    if (!(st.armijo_c > 0.0 && st.armijo_c < 1.0)) {
      throw InvalidArgument("armijo_c must lie in (0,1)");
    }
  }
  if (!(config.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (config.max_iterations == 0) throw InvalidArgument("max_iterations must be positive");
  if (config.hessian_regularization_mu && !(*config.hessian_regularization_mu >= 0.0)) {
    throw InvalidArgument("hessian_regularization_mu must be non-negative");
  }
  if (!(config.hessian_fd_step > 0.0)) throw InvalidArgument("hessian_fd_step must be positive");
}

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

Vec to_vec(std::span<const double> s) {
  return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

struct Evaluation {
  double cost = 0.0;
  Vec gradient;  // dE/dz
  Vec indirect;  // search direction of the indirect mode
  double stationarity_norm = 0.0;
};

using Evaluator = std::function<Evaluation(const Vec&)>;
using CostFn = std::function<double(const Vec&)>;

Mat fd_jacobian_of_gradient(const Evaluator& eval, const Vec& z, double step) {
  const Eigen::Index n = z.size();
  Mat h(n, n);
  Vec probe = z;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double up = z(j) + step;
    const double dn = z(j) - step;
    probe(j) = up;
    const Vec g_up = eval(probe).gradient;
    probe(j) = dn;
    const Vec g_dn = eval(probe).gradient;
    probe(j) = z(j);
    h.col(j) = (g_up - g_dn) / (up - dn);
  }
  return 0.5 * (h + h.transpose());
}

double inf_norm_rows(const Mat& m) {
  return m.rows() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

// Solves (H + mu I) d = rhs. mu == 0 demands H itself be positive definite;
// otherwise mu grows tenfold until the Cholesky factorization succeeds.
Vec regularized_newton_solve(const Mat& hessian, const Vec& rhs, std::optional<double> mu_opt,
                             IterationTrace* trace) {
  const Eigen::Index n = hessian.rows();
  double mu = mu_opt.value_or(1e-8 * (1.0 + inf_norm_rows(hessian)));
  if (mu == 0.0) {
    Eigen::LLT<Mat> llt(hessian);
    if (llt.info() != Eigen::Success) {
      throw SingularMetric(
          "Newton metric is singular or indefinite with mu = 0; set hessian_regularization_mu > 0");
    }
    return llt.solve(rhs);
  }
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<Mat> llt(hessian + mu * Mat::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    if (trace && attempt == 0) {
      trace->warnings.emplace_back("indefinite Newton metric; regularization increased");
    }
    mu *= 10.0;
  }
  throw SingularMetric("Newton metric could not be regularized to positive definiteness");
}

bool diverged_point(double cost, const Vec& z) {
  if (!std::isfinite(cost) || std::abs(cost) > kDivergenceThreshold) return true;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z(i)) || std::abs(z(i)) > kDivergenceThreshold) return true;
  }
  return false;
}

struct EngineResult {
  Vec z;
  IterationTrace trace;
  std::vector<std::vector<double>> iterates;
};

EngineResult run_engine(const Evaluator& eval, const CostFn& cost_fn, double h,
                        const SolverConfig& cfg, Vec z, bool record_iterates,
                        std::vector<std::string> warnings = {}) {
  validate(cfg);
  EngineResult out;
  out.trace.warnings = std::move(warnings);
  auto& trace = out.trace;

  Evaluation cur;
  try {
    cur = eval(z);
  } catch (const DivergenceError& e) {
    trace.status = SolveStatus::diverged;
    trace.message = e.what();
    out.z = std::move(z);
    return out;
  }

  Mat inv_metric = Mat::Identity(z.size(), z.size());  // quasi-Newton state
  double last_step = 0.0;

  for (std::size_t i = 0;; ++i) {
    trace.records.push_back({i, cur.cost, cur.gradient.lpNorm<Eigen::Infinity>(),
                             cur.stationarity_norm, last_step});
    if (record_iterates) out.iterates.emplace_back(z.data(), z.data() + z.size());

    if (diverged_point(cur.cost, z)) {
      trace.status = SolveStatus::diverged;
      trace.message = "cost or controls exceeded the divergence threshold";
      break;
    }
    const Vec& base = cfg.mode == Mode::direct ? cur.gradient : cur.indirect;
    if (base.lpNorm<Eigen::Infinity>() <= cfg.tolerance) {
      trace.status = SolveStatus::converged;
      break;
    }
    if (i == cfg.max_iterations) {
      trace.status = SolveStatus::max_iterations;
      break;
    }

    Vec dir;
    switch (cfg.method) {
      case Method::gradient:
        dir = base;
        break;
      case Method::newton: {
        const Mat hess = fd_jacobian_of_gradient(eval, z, cfg.hessian_fd_step);
        dir = regularized_newton_solve(hess, base, cfg.hessian_regularization_mu, &trace);
        break;
      }
      case Method::quasi_newton:
        dir = inv_metric * base;
        break;
    }

    double step = 0.0;
    Vec z_next;
    Evaluation next;
    bool accepted = false;
    switch (cfg.step.kind) {
      case StepPolicy::Kind::fixed:
      case StepPolicy::Kind::compensated: {
        if (cfg.step.kind == StepPolicy::Kind::fixed) {
          step = cfg.step.alpha;
        } else {
          step = cfg.mode == Mode::direct ? 1.0 / h : 1.0;
        }
        z_next = z - step * dir;
        try {
          next = eval(z_next);
          accepted = true;
        } catch (const DivergenceError& e) {
          trace.message = e.what();
        }
        if (!accepted) {
          trace.records.push_back({i + 1, std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity(), step});
          trace.status = SolveStatus::diverged;
        }
        break;
      }
      case StepPolicy::Kind::backtracking: {
        double slope = cur.gradient.dot(dir);
        if (!(slope > 0.0)) {
          // Not a descent direction for E^N; fall back to the raw direction.
          dir = base;
          inv_metric.setIdentity();
          slope = cur.gradient.dot(dir);
        }
        step = cfg.step.alpha0;
        for (int trial = 0; trial < 60 && slope > 0.0; ++trial, step *= cfg.step.shrink) {
          const Vec cand = z - step * dir;
          double c = std::numeric_limits<double>::infinity();
          try {
            c = cost_fn(cand);
          } catch (const DivergenceError&) {
          }
          if (c <= cur.cost - cfg.step.armijo_c * step * slope) {
            z_next = cand;
            try {
              next = eval(z_next);
              accepted = true;
            } catch (const DivergenceError& e) {
              trace.message = e.what();
            }
            break;
          }
        }
        if (!accepted) {
          trace.status = SolveStatus::stalled;
          if (trace.message.empty()) trace.message = "line search found no Armijo step";
        }
        break;
      }
    }
    if (!accepted) break;

    if (cfg.method == Method::quasi_newton) {
      const Vec s = z_next - z;
      const Vec y = next.gradient - cur.gradient;
      const double ys = y.dot(s);
      if (ys > 0.0 && std::isfinite(ys)) {
        const double rho = 1.0 / ys;
        const Mat eye = Mat::Identity(z.size(), z.size());
        inv_metric = (eye - rho * s * y.transpose()) * inv_metric * (eye - rho * y * s.transpose()) +
                     rho * s * s.transpose();
      } else {
        inv_metric.setIdentity();
      }
    }

    z = std::move(z_next);
    cur = std::move(next);
    last_step = step;
  }
  out.z = std::move(z);
  return out;
}

}  // namespace

DirectSolveResult solve_direct(const ScalarOCP& problem, const UniformGrid& grid,
                               std::span<const double> initial_controls,
                               const SolverConfig& config, bool record_iterates) {
  if (initial_controls.size() != grid.intervals()) {
    throw DimensionError("expected " + std::to_string(grid.intervals()) +
                         " initial controls, got " + std::to_string(initial_controls.size()));
  }
  Evaluator eval = [&](const Vec& u) {
    const GradientReport r = adjoint_gradient(problem, grid, as_span(u));
    return Evaluation{r.cost, to_vec(r.gradient), to_vec(r.stationarity),
                      r.stationarity_inf_norm};
  };
  CostFn cost = [&](const Vec& u) { return reduced_cost(problem, grid, as_span(u)); };

  auto res = run_engine(eval, cost, grid.h(), config, to_vec(initial_controls), record_iterates);
  DirectSolveResult out;
  out.controls.assign(res.z.data(), res.z.data() + res.z.size());
  out.trace = std::move(res.trace);
  out.iterates = std::move(res.iterates);
  return out;
}

ParameterizedSolveResult solve_parameterized(const ScalarOCP& problem, const UniformGrid& grid,
                                             const ControlBasis& basis,
                                             std::span<const double> initial_coeffs,
                                             const SolverConfig& config, bool record_iterates) {
  if (initial_coeffs.size() != basis.size) {
    throw DimensionError("expected " + std::to_string(basis.size) + " coefficients, got " +
                         std::to_string(initial_coeffs.size()));
  }
  ParameterizedSolveResult out;
  out.rank = basis_rank_check(basis, grid);
  std::vector<std::string> warnings;
  if (!out.rank.full_rank) {
    warnings.push_back("rank-deficient control basis (rank " + std::to_string(out.rank.rank) +
                       " < " + std::to_string(basis.size) +
                       "): a vanishing coefficient gradient does not imply a vanishing control "
                       "gradient");
  }

  const Mat b = sample_matrix(basis, grid);
  Evaluator eval = [&](const Vec& c) {
    const Vec u = b * c;
    const GradientReport r = adjoint_gradient(problem, grid, as_span(u));
    return Evaluation{r.cost, b.transpose() * to_vec(r.gradient),
                      b.transpose() * to_vec(r.stationarity), r.stationarity_inf_norm};
  };
  CostFn cost = [&](const Vec& c) {
    const Vec u = b * c;
    return reduced_cost(problem, grid, as_span(u));
  };

  auto res = run_engine(eval, cost, grid.h(), config, to_vec(initial_coeffs), record_iterates,
                        std::move(warnings));
  out.coeffs.assign(res.z.data(), res.z.data() + res.z.size());
  const Vec u = b * res.z;
  out.controls.assign(u.data(), u.data() + u.size());
  out.trace = std::move(res.trace);
  if (out.trace.status != SolveStatus::diverged) {
    out.inner_grad_inf_norm = adjoint_gradient(problem, grid, out.controls).grad_inf_norm;
  }
  out.iterates = std::move(res.iterates);
  return out;
}

Eigen::MatrixXd newton_hessian(const ScalarOCP& problem, const UniformGrid& grid,
                               std::span<const double> controls, double fd_step) {
  if (!(fd_step > 0.0)) throw InvalidArgument("fd_step must be positive");
  if (controls.size() != grid.intervals()) throw DimensionError("controls do not match grid");
  Evaluator eval = [&](const Vec& u) {
    Evaluation e;
    e.gradient = to_vec(adjoint_gradient(problem, grid, as_span(u)).gradient);
    return e;
  };
  return fd_jacobian_of_gradient(eval, to_vec(controls), fd_step);
}

FlowTrace integrate_gradient_flow(const ScalarOCP& problem, const UniformGrid& grid,
                                  std::span<const double> initial_controls, FlowMetric metric,
                                  double tau_end, double substep) {
  if (!(substep > 0.0)) throw InvalidArgument("substep must be positive");
  if (!(tau_end >= 0.0)) throw InvalidArgument("tau_end must be non-negative");
  if (initial_controls.size() != grid.intervals()) {
    throw DimensionError("controls do not match grid");
  }

  FlowTrace out;
  Vec u = to_vec(initial_controls);
  double tau = 0.0;
  auto finish = [&] { out.controls.assign(u.data(), u.data() + u.size()); };

  GradientReport r;
  try {
    r = adjoint_gradient(problem, grid, as_span(u));
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.message = e.what();
    finish();
    return out;
  }
  out.tau.push_back(tau);
  out.grad_inf_norm.push_back(r.grad_inf_norm);

  while (tau < tau_end) {
    const double dt = std::min(substep, tau_end - tau);
    Vec g = to_vec(r.gradient);
    Vec dir = g;
    if (metric == FlowMetric::newton) {
      const Mat hess = newton_hessian(problem, grid, as_span(u));
      dir = regularized_newton_solve(hess, g, std::nullopt, nullptr);
    }
    u -= dt * dir;
    tau += dt;
    try {
      r = adjoint_gradient(problem, grid, as_span(u));
    } catch (const DivergenceError& e) {
      out.diverged = true;
      out.monotone_decrease = false;
      out.message = e.what();
      break;
    }
    if (!(r.grad_inf_norm <= out.grad_inf_norm.back())) out.monotone_decrease = false;
    out.tau.push_back(tau);
    out.grad_inf_norm.push_back(r.grad_inf_norm);
    if (!(r.grad_inf_norm <= kDivergenceThreshold)) {
      out.diverged = true;
      out.message = "gradient norm exceeded the divergence threshold";
      break;
    }
  }
  finish();
  return out;
}

}  // namespace hamlab
