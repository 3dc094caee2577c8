#include "hamlab/hamiltonianizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hamlab/errors.hpp"

namespace hamlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

AutonomousODE linear_ode(const MatrixXd& a, std::string name) {
  if (a.rows() != a.cols() || a.rows() == 0) throw DimensionError("A must be square");
  return {std::move(name), static_cast<std::size_t>(a.rows()),
          [a](const VectorXd& x) -> VectorXd { return a * x; },
          [a](const VectorXd&) -> MatrixXd { return a; }};
}

AutonomousODE builtin_ode(std::string_view name) {
  if (name == "scalar_decay") return linear_ode(MatrixXd::Constant(1, 1, -1.0), "scalar_decay");
  if (name == "rotation") {
    MatrixXd a(2, 2);
    a << 0.0, 1.0, -1.0, 0.0;
    return linear_ode(a, "rotation");
  }
  if (name == "zero") return linear_ode(MatrixXd::Zero(1, 1), "zero");
  throw InvalidArgument("unknown ODE '" + std::string(name) + "'");
}

double jacobian_check(const AutonomousODE& ode, std::size_t probes, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(ode.dimension);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = dist(rng);
    const MatrixXd j = ode.jacobian(x);
    for (Eigen::Index c = 0; c < n; ++c) {
      const double d = 1e-6 * std::max(1.0, std::abs(x(c)));
      VectorXd up = x, dn = x;
      up(c) += d;
      dn(c) -= d;
      const VectorXd col = (ode.vector_field(up) - ode.vector_field(dn)) / (up(c) - dn(c));
      for (Eigen::Index r = 0; r < n; ++r) {
        const double e = std::abs(j(r, c) - col(r)) / std::max(1.0, std::abs(col(r)));
        if (!(e <= worst) && !std::isnan(worst)) worst = e;
      }
    }
  }
  return worst;
}

HamiltonianSystem::HamiltonianSystem(AutonomousODE base) : base_(std::move(base)) {
  if (base_.dimension == 0 || !base_.vector_field || !base_.jacobian) {
    throw InvalidArgument("ODE needs a dimension, a vector field and a Jacobian");
  }
}

double HamiltonianSystem::hamiltonian(const VectorXd& psi, const VectorXd& x) const {
  return psi.dot(base_.vector_field(x));
}

VectorXd HamiltonianSystem::shadow_field(const VectorXd& x, const VectorXd& psi) const {
  return -(base_.jacobian(x).transpose() * psi);
}

VectorXd HamiltonianSystem::joint_field(const VectorXd& joint) const {
  const auto n = static_cast<Eigen::Index>(base_.dimension);
  VectorXd out(2 * n);
  const VectorXd x = joint.head(n);
  out.head(n) = base_.vector_field(x);
  out.tail(n) = shadow_field(x, joint.tail(n));
  return out;
}

HamiltonianSystem hamiltonianize(AutonomousODE ode) { return HamiltonianSystem(std::move(ode)); }

JointTrajectory integrate_joint(const HamiltonianSystem& system, const VectorXd& x_init,
                                const VectorXd& psi_init, double t_end, double step,
                                JointIntegrator integrator) {
  if (!(step > 0.0)) throw InvalidArgument("step must be positive");
  if (!(t_end >= 0.0)) throw InvalidArgument("t_end must be non-negative");
  const auto n = static_cast<Eigen::Index>(system.dimension());
  if (x_init.size() != n || psi_init.size() != n) {
    throw DimensionError("initial data does not match the ODE dimension");
  }

  JointTrajectory out;
  VectorXd y(2 * n);
  y << x_init, psi_init;
  auto record = [&](double t) {
    out.samples.push_back({t, y.head(n), y.tail(n), system.hamiltonian(y.tail(n), y.head(n))});
  };
  record(0.0);

  // Fixed number of steps so that t_k = k * step exactly (up to the final remainder).
  const auto full = static_cast<std::size_t>(std::floor(t_end / step * (1.0 + 1e-12)));
  const double remainder = t_end - static_cast<double>(full) * step;
  const std::size_t count = full + (remainder > 1e-12 * step ? 1 : 0);

  for (std::size_t k = 0; k < count; ++k) {
    const double dt = k < full ? step : remainder;
    if (integrator == JointIntegrator::rk4) {
      const VectorXd k1 = system.joint_field(y);
      const VectorXd k2 = system.joint_field(y + 0.5 * dt * k1);
      const VectorXd k3 = system.joint_field(y + 0.5 * dt * k2);
      const VectorXd k4 = system.joint_field(y + dt * k3);
      y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      y += dt * system.joint_field(y);
    }
    if (!y.allFinite() || y.lpNorm<Eigen::Infinity>() > 1e12) {
      out.diverged = true;
      break;
    }
    record(k < full ? static_cast<double>(k + 1) * step : t_end);
  }
  return out;
}

ConservationReport conservation_report(const JointTrajectory& trajectory) {
  if (trajectory.samples.size() < 2) {
    throw InvalidArgument("conservation report needs at least two samples");
  }
  const double h0 = trajectory.samples.front().hamiltonian;
  ConservationReport r;
  for (const auto& s : trajectory.samples) {
    const double d = std::abs(s.hamiltonian - h0);
    if (!(d <= r.max_drift) && !std::isnan(r.max_drift)) r.max_drift = d;
  }
  r.relative_drift = r.max_drift / std::max(1.0, std::abs(h0));
  return r;
}

}  // namespace hamlab
