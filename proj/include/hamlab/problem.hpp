#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace hamlab {

using ScalarFn2 = std::function<double(double x, double u)>;
using ScalarFn1 = std::function<double(double x)>;

/// Continuous-time data of the endpoint-cost problem
///
///   minimize E(x(tf))  subject to  x' = f(x, u),  x(t0) = x0.
///
/// State and control are scalar. Derivatives are supplied in closed form;
/// use check_derivatives() to validate them against finite differences.
struct ScalarOCP {
  std::string name;
  ScalarFn2 dynamics;
  ScalarFn2 dynamics_dx;
  ScalarFn2 dynamics_du;
  ScalarFn1 endpoint_cost;
  ScalarFn1 endpoint_cost_dx;
  double x0 = 0.0;
  double t0 = 0.0;
  double tf = 1.0;

  double horizon() const { return tf - t0; }
};

enum class TestProblemId { linear_integrator, damped_linear, bilinear, cubic_drag };

inline constexpr TestProblemId kAllTestProblems[] = {
    TestProblemId::linear_integrator, TestProblemId::damped_linear, TestProblemId::bilinear,
    TestProblemId::cubic_drag};

std::string_view to_string(TestProblemId id);
// Throws InvalidArgument for unknown names.
TestProblemId parse_problem_id(std::string_view name);

/// All built-ins live on t in [0, 1] with x0 = 1:
///   linear_integrator  f = u          E = x^2/2
///   damped_linear      f = -x + u     E = x^2/2
///   bilinear           f = x u        E = x^2/2
///   cubic_drag         f = -x^3 + u   E = (x - 0.5)^2/2
ScalarOCP builtin_problem(TestProblemId id);

// Throws InvalidArgument when tf <= t0 or a callable is missing.
void validate(const ScalarOCP& problem);

// H(lam, x, u) = lam * f(x, u)
double hamiltonian(const ScalarOCP& problem, double lam, double x, double u);
// dH/du = lam * df/du(x, u)
double hamiltonian_du(const ScalarOCP& problem, double lam, double x, double u);

struct DerivativeCheckReport {
  std::size_t probes = 0;
  double max_rel_error_dynamics_dx = 0.0;
  double max_rel_error_dynamics_du = 0.0;
  double max_rel_error_endpoint_cost_dx = 0.0;
  double tolerance = 1e-5;
  bool passed = true;
};

inline constexpr std::uint64_t kDefaultDerivativeSeed = 20200101;

/// Compares the supplied derivatives with central differences at `probes`
/// points drawn uniformly from [-2, 2]^2. The relative error at a probe is
/// |analytic - fd| / max(1, |fd|).
DerivativeCheckReport check_derivatives(const ScalarOCP& problem, std::size_t probes,
                                        std::uint64_t seed = kDefaultDerivativeSeed);

}  // namespace hamlab
