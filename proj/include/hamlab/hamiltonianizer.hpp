#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace hamlab {

/// Autonomous vector ODE x' = f(x) with its Jacobian df/dx.
struct AutonomousODE {
  std::string name;
  std::size_t dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> vector_field;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

// x' = A x
AutonomousODE linear_ode(const Eigen::MatrixXd& a, std::string name = "linear");

// scalar_decay: x' = -x; rotation: (x2, -x1); zero: x' = 0 (dimension 1).
AutonomousODE builtin_ode(std::string_view name);

// Largest |J - J_fd| / max(1, |J_fd|) over random probes in [-2, 2]^n.
double jacobian_check(const AutonomousODE& ode, std::size_t probes, std::uint64_t seed);

/// The ODE completed by its shadow (costate) equation:
///
///   H(psi, x) = psi^T f(x),   x' = dH/dpsi = f(x),   -psi' = dH/dx = (df/dx)^T psi.
class HamiltonianSystem {
 public:
  explicit HamiltonianSystem(AutonomousODE base);

  const AutonomousODE& base() const { return base_; }
  std::size_t dimension() const { return base_.dimension; }

  double hamiltonian(const Eigen::VectorXd& psi, const Eigen::VectorXd& x) const;
  // psi' = -(df/dx)^T psi
  Eigen::VectorXd shadow_field(const Eigen::VectorXd& x, const Eigen::VectorXd& psi) const;
  // Stacked (x', psi') for the joint state (x, psi).
  Eigen::VectorXd joint_field(const Eigen::VectorXd& joint) const;

 private:
  AutonomousODE base_;
};

HamiltonianSystem hamiltonianize(AutonomousODE ode);

enum class JointIntegrator { rk4, euler };

struct JointSample {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd psi;
  double hamiltonian = 0.0;
};

struct JointTrajectory {
  std::vector<JointSample> samples;
  bool diverged = false;
};

/// Fixed-step integration of the joint system from t = 0 to t_end; the last
/// step is shortened to land on t_end. Stops early, flagging `diverged`, when
/// a component exceeds 1e12 in magnitude.
JointTrajectory integrate_joint(const HamiltonianSystem& system, const Eigen::VectorXd& x_init,
                                const Eigen::VectorXd& psi_init, double t_end, double step,
                                JointIntegrator integrator = JointIntegrator::rk4);

struct ConservationReport {
  double max_drift = 0.0;       // max_k |H(t_k) - H(t_0)|
  double relative_drift = 0.0;  // max_drift / max(1, |H(t_0)|)
};

ConservationReport conservation_report(const JointTrajectory& trajectory);

}  // namespace hamlab
