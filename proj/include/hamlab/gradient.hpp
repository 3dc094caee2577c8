#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hamlab/euler.hpp"
#include "hamlab/problem.hpp"

namespace hamlab {

inline constexpr double kDefaultFdStep = 1e-6;

/// Gradient of the reduced cost E^N(U) = E(x_N(U)) together with the
/// indirect quantities it was assembled from. On a uniform grid
/// gradient[k] == h * stationarity[k] holds by construction.
struct GradientReport {
  Trajectory trajectory;
  CostateTrajectory costates;
  std::vector<double> gradient;
  std::vector<double> stationarity;
  double cost = 0.0;
  double grad_inf_norm = 0.0;
  double stationarity_inf_norm = 0.0;
};

// E(x_N(U)) on the given grid.
double reduced_cost(const ScalarOCP& problem, const UniformGrid& grid,
                    std::span<const double> controls);
double reduced_cost(const ScalarOCP& problem, const NonuniformGrid& grid,
                    std::span<const double> controls);

// Forward sweep, costate sweep, then gradient[k] = h_k * lambda_k * df/du(x_k, u_k).
GradientReport adjoint_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                std::span<const double> controls);
GradientReport adjoint_gradient(const ScalarOCP& problem, const NonuniformGrid& grid,
                                std::span<const double> controls);

using ScalarField = std::function<double(std::span<const double>)>;

// Central differences of `fn`, one coordinate at a time.
std::vector<double> central_difference_gradient(const ScalarField& fn,
                                                std::span<const double> point, double step);

// Central-difference gradient of U -> E(x_N(U)); 2N simulations, no costates involved.
std::vector<double> fd_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                std::span<const double> controls,
                                double fd_step = kDefaultFdStep);
std::vector<double> fd_gradient(const ScalarOCP& problem, const NonuniformGrid& grid,
                                std::span<const double> controls,
                                double fd_step = kDefaultFdStep);

/// Control parameterization u(t_k; C) = sum_j c_j xi_j(t_k).
/// The sampler receives the basis index, the node index and the node time.
struct ControlBasis {
  std::string name;
  std::size_t size = 0;
  std::function<double(std::size_t j, std::size_t k, double t)> sample;

  static ControlBasis constant();
  // 1, t, t^2, ... in the node time.
  static ControlBasis monomial(std::size_t degree_count);
  // xi_j(t_k) = [j == k]
  static ControlBasis indicator(std::size_t n);
  // Every function of `base` twice in a row: columns (b0, b0, b1, b1, ...).
  static ControlBasis duplicated(const ControlBasis& base);
  // +1 on the first half of the nodes and -1 on the rest.
  static ControlBasis alternating_halves(std::size_t n);
  static ControlBasis zero(std::size_t m);
};

// N x m matrix B with B(k, j) = xi_j(t_k), k = 0..N-1.
Eigen::MatrixXd sample_matrix(const ControlBasis& basis, const UniformGrid& grid);

struct ParameterizedGradient {
  std::vector<double> coeff_gradient;  // B^T dE/dU
  std::vector<double> controls;        // B C
  GradientReport inner;
};

ParameterizedGradient parameterized_gradient(const ScalarOCP& problem, const UniformGrid& grid,
                                             const ControlBasis& basis,
                                             std::span<const double> coeffs);

struct RankCheck {
  std::size_t rank = 0;
  bool full_rank = false;
  std::vector<double> singular_values;
};

// Singular values below 1e-10 * sigma_max count as zero. m > N is a DimensionError.
RankCheck basis_rank_check(const ControlBasis& basis, const UniformGrid& grid);

struct EquivalenceVerdict {
  std::vector<double> fd_gradient;
  std::vector<double> scaled_stationarity;  // h * dH/du_k
  // ||fd - h*Hu||_inf / max(1, ||h*Hu||_inf)
  double fd_deviation = 0.0;
  // max_k |gradient[k] - h*Hu_k| along the adjoint route
  double identity_defect = 0.0;
  double fd_tolerance = 1e-5;
  bool fd_passed = false;
  bool identity_passed = false;
  bool passed = false;
};

/// Checks the covector identity two ways: the adjoint route against its own
/// h-scaled stationarity stack, and the finite-difference gradient against
/// the h-scaled stationarity stack.
EquivalenceVerdict verify_equivalence(const ScalarOCP& problem, const UniformGrid& grid,
                                      std::span<const double> controls,
                                      double fd_step = kDefaultFdStep, double fd_tolerance = 1e-5);

// Same, but the stationarity stack is formed from caller-supplied costates.
EquivalenceVerdict verify_equivalence_with_costates(const ScalarOCP& problem,
                                                    const UniformGrid& grid,
                                                    std::span<const double> controls,
                                                    const CostateTrajectory& costates,
                                                    double fd_step = kDefaultFdStep,
                                                    double fd_tolerance = 1e-5);

struct StationarityBound {
  double epsilon = 0.0;
  double bound = 0.0;  // epsilon / h
  double max_stationarity = 0.0;
  bool satisfied = false;
};

// epsilon / h. Throws InvalidArgument for h <= 0.
double stationarity_bound(double epsilon, double h);

/// Gradient tolerance epsilon = ||dE/dU||_inf maps to a Hamiltonian
/// stationarity tolerance epsilon / h. `satisfied` allows 4 ulps of slack
/// since (h s) / h need not round back to s.
StationarityBound theorem1_bound(const GradientReport& report, const UniformGrid& grid);

enum class AdaptationRule { identity, arclength };

std::string_view to_string(AdaptationRule rule);
AdaptationRule parse_adaptation_rule(std::string_view name);

/// Grid produced by `rule` for the given controls on the problem horizon.
/// identity: uniform. arclength: h_k proportional to 1 / (1 + |f(x_k, u_k)|)
/// along the uniform-grid trajectory, normalized to span the horizon.
NonuniformGrid adapt_grid(const ScalarOCP& problem, AdaptationRule rule,
                          std::span<const double> controls);

struct AdaptiveDecomposition {
  NonuniformGrid grid;             // grid adapted at the given controls
  std::vector<double> naive;       // adjoint gradient with the grid frozen
  std::vector<double> true_fd;     // FD of U -> E(x_N(U, grid(U)))
  double noise_norm = 0.0;         // ||true_fd - naive||_inf
};

AdaptiveDecomposition adaptive_gradient_decomposition(const ScalarOCP& problem,
                                                      AdaptationRule rule,
                                                      std::span<const double> controls,
                                                      double fd_step = kDefaultFdStep);

}  // namespace hamlab
