#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "hamlab/errors.hpp"
#include "hamlab/gradient.hpp"
#include "oracles.hpp"

using namespace hamlab;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

const std::pair<TestProblemId, oracle::Fixture> kFixtures[] = {
    {TestProblemId::linear_integrator, oracle::linear_integrator()},
    {TestProblemId::damped_linear, oracle::damped_linear()},
    {TestProblemId::bilinear, oracle::bilinear()},
    {TestProblemId::cubic_drag, oracle::cubic_drag()}};

}  // namespace

TEST(AdjointGradient, LinearIntegratorAtRest) {
  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const auto r = adjoint_gradient(p, UniformGrid::over(p, 2), std::vector<double>{0.0, 0.0});
  EXPECT_EQ(r.gradient, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(r.stationarity, (std::vector<double>{1.0, 1.0}));
  const auto fd = oracle::fd_cost_gradient(oracle::linear_integrator(), {0.0, 0.0}, {0.5, 0.5});
  EXPECT_NEAR(fd[0], 0.5, 1e-9);
  EXPECT_NEAR(fd[1], 0.5, 1e-9);
}

TEST(AdjointGradient, ZeroTerminalGradient) {
  auto p = builtin_problem(TestProblemId::bilinear);
  p.endpoint_cost = [](double) { return 1.0; };
  p.endpoint_cost_dx = [](double) { return 0.0; };
  const auto r = adjoint_gradient(p, UniformGrid::over(p, 5), std::vector<double>(5, 0.7));
  for (double g : r.gradient) EXPECT_EQ(g, 0.0);
}

TEST(AdjointGradient, DampedLinearHandValues) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  const auto r = adjoint_gradient(p, UniformGrid::over(p, 2), std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(r.gradient[0], 0.0625);
  EXPECT_DOUBLE_EQ(r.gradient[1], 0.125);
  const auto fd = oracle::fd_cost_gradient(oracle::damped_linear(), {0.0, 0.0}, {0.5, 0.5});
  EXPECT_NEAR(fd[0], 0.0625, 1e-9);
  EXPECT_NEAR(fd[1], 0.125, 1e-9);
}

TEST(AdjointGradient, CovectorIdentityAndOracleAgreement) {
  std::mt19937_64 rng(2020);
  for (const auto& [id, ref] : kFixtures) {
    const auto p = builtin_problem(id);
    for (std::size_t n : {2u, 8u, 32u}) {
      const UniformGrid g = UniformGrid::over(p, n);
      for (int trial = 0; trial < 10; ++trial) {
        const auto u = oracle::random_vector(n, rng);
        const auto r = adjoint_gradient(p, g, u);
        for (std::size_t k = 0; k < n; ++k) {
          EXPECT_LE(std::abs(r.gradient[k] - g.h() * r.stationarity[k]),
                    4 * kEps * std::abs(r.gradient[k]));
        }
        const auto fd = oracle::fd_cost_gradient(ref, u, oracle::uniform_steps(n));
        EXPECT_LE(oracle::max_abs_diff(fd, r.gradient) / std::max(1.0, oracle::max_abs(r.gradient)),
                  1e-5)
            << to_string(id) << " N=" << n;
        EXPECT_EQ(r.cost, ref.e(oracle::euler_states(ref.f, 1.0, u, oracle::uniform_steps(n)).back()));
        EXPECT_EQ(r.grad_inf_norm, oracle::max_abs(r.gradient));
        EXPECT_EQ(r.stationarity_inf_norm, oracle::max_abs(r.stationarity));
      }
    }
  }
}

TEST(AdjointGradient, FirstVariationIdentity) {
  std::mt19937_64 rng(46);
  const auto p = builtin_problem(TestProblemId::cubic_drag);
  const UniformGrid g = UniformGrid::over(p, 16);
  const auto r = adjoint_gradient(p, g, oracle::random_vector(16, rng));
  for (int i = 0; i < 20; ++i) {
    const auto du = oracle::random_vector(16, rng);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
      lhs += r.gradient[k] * du[k];
      rhs += r.stationarity[k] * du[k];
    }
    EXPECT_NEAR(lhs, g.h() * rhs, 16 * kEps * std::max(1.0, std::abs(lhs)));
  }
}

TEST(AdjointGradient, NonuniformGridAgreesWithFdOracle) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  const std::vector<double> steps{0.05, 0.2, 0.1, 0.3, 0.15, 0.2};
  const std::vector<double> u{0.4, -0.3, 0.9, 0.0, -1.0, 0.5};
  const auto r = adjoint_gradient(p, NonuniformGrid::from_steps(0.0, steps), u);
  const auto fd = oracle::fd_cost_gradient(oracle::damped_linear(), u, steps);
  EXPECT_LE(oracle::max_abs_diff(fd, r.gradient), 1e-9);
  for (std::size_t k = 0; k < u.size(); ++k) {
    EXPECT_EQ(r.gradient[k], steps[k] * r.stationarity[k]);
  }
}

TEST(FdGradient, MatchesExamples) {
  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const auto fd = fd_gradient(p, UniformGrid::over(p, 2), std::vector<double>{0.0, 0.0}, 1e-6);
  EXPECT_NEAR(fd[0], 0.5, 1e-9);
  EXPECT_NEAR(fd[1], 0.5, 1e-9);

  auto z = p;
  z.dynamics = [](double, double) { return 0.0; };
  for (double v : fd_gradient(z, UniformGrid::over(z, 4), std::vector<double>(4, 0.3))) {
    EXPECT_EQ(v, 0.0);
  }

  std::mt19937_64 rng(8);
  const auto c = builtin_problem(TestProblemId::cubic_drag);
  const UniformGrid g = UniformGrid::over(c, 8);
  const auto u = oracle::random_vector(8, rng);
  const auto a = adjoint_gradient(c, g, u).gradient;
  const auto f = fd_gradient(c, g, u);
  EXPECT_LE(oracle::max_abs_diff(a, f) / std::max(1.0, oracle::max_abs(a)), 1e-6);
}

TEST(FdGradient, CentralDifferenceOfQuadratic) {
  const ScalarField fn = [](std::span<const double> v) { return v[0] * v[0] + 3 * v[1]; };
  const auto g = central_difference_gradient(fn, std::vector<double>{2.0, -1.0}, 1e-4);
  EXPECT_NEAR(g[0], 4.0, 1e-9);
  EXPECT_NEAR(g[1], 3.0, 1e-9);
}

TEST(ParameterizedGradient, ConstantBasis) {
  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const UniformGrid g = UniformGrid::over(p, 2);
  const auto r = parameterized_gradient(p, g, ControlBasis::constant(), std::vector<double>{0.0});
  ASSERT_EQ(r.coeff_gradient.size(), 1u);
  EXPECT_DOUBLE_EQ(r.coeff_gradient[0], 1.0);
  // FD in the coefficient: E(c) = (1 + c)^2 / 2.
  const double d = 1e-6;
  const double fd = (0.5 * (1 + d) * (1 + d) - 0.5 * (1 - d) * (1 - d)) / (2 * d);
  EXPECT_NEAR(r.coeff_gradient[0], fd, 1e-9);
}

TEST(ParameterizedGradient, ZeroBasisKillsGradient) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  const auto r = parameterized_gradient(p, UniformGrid::over(p, 6), ControlBasis::zero(3),
                                        std::vector<double>{1.0, -2.0, 0.5});
  EXPECT_GT(r.inner.grad_inf_norm, 0.0);
  for (double v : r.coeff_gradient) EXPECT_EQ(v, 0.0);
}

TEST(ParameterizedGradient, IndicatorBasisIsIdentity) {
  std::mt19937_64 rng(12);
  const auto p = builtin_problem(TestProblemId::bilinear);
  const UniformGrid g = UniformGrid::over(p, 7);
  const auto c = oracle::random_vector(7, rng);
  const auto r = parameterized_gradient(p, g, ControlBasis::indicator(7), c);
  EXPECT_EQ(r.controls, c);
  EXPECT_EQ(r.coeff_gradient, adjoint_gradient(p, g, c).gradient);
}

TEST(ParameterizedGradient, MonomialMatchesFdInCoefficients) {
  const auto p = builtin_problem(TestProblemId::cubic_drag);
  const UniformGrid g = UniformGrid::over(p, 12);
  const std::vector<double> c{0.2, -0.5, 0.3};
  const auto basis = ControlBasis::monomial(3);
  const auto r = parameterized_gradient(p, g, basis, c);
  const ScalarField fn = [&](std::span<const double> cc) {
    std::vector<double> u(12, 0.0);
    for (std::size_t k = 0; k < 12; ++k) {
      const double t = g.node(k);
      u[k] = cc[0] + cc[1] * t + cc[2] * t * t;
    }
    return oracle::cost(oracle::cubic_drag(), u, oracle::uniform_steps(12));
  };
  const auto fd = central_difference_gradient(fn, c, 1e-6);
  EXPECT_LE(oracle::max_abs_diff(fd, r.coeff_gradient), 1e-8);
}

TEST(ParameterizedGradient, RankDeficientBasisHidesInnerGradient) {
  // B = [xi, xi] with xi = +1 / -1 halves. At C with c1 + c2 = -1 on linear_integrator
  // the controls integrate to zero change, so x_N = 1 and dE/dU = h * 1 everywhere:
  // B^T g = sum(+h) - sum(-h) = 0 for both columns while g != 0.
  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const UniformGrid g = UniformGrid::over(p, 8);
  const auto basis = ControlBasis::duplicated(ControlBasis::alternating_halves(8));
  const auto r = parameterized_gradient(p, g, basis, std::vector<double>{0.3, -1.3});
  EXPECT_NEAR(oracle::max_abs(r.coeff_gradient), 0.0, 1e-15);
  EXPECT_NEAR(r.inner.grad_inf_norm, g.h(), 1e-15);
  EXPECT_FALSE(basis_rank_check(basis, g).full_rank);
}

TEST(SampleMatrix, Layout) {
  const UniformGrid g(0.0, 1.0, 4);
  const Eigen::MatrixXd b = sample_matrix(ControlBasis::monomial(2), g);
  ASSERT_EQ(b.rows(), 4);
  ASSERT_EQ(b.cols(), 2);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(b(k, 0), 1.0);
    EXPECT_DOUBLE_EQ(b(k, 1), 0.25 * k);
  }
  const Eigen::MatrixXd d = sample_matrix(ControlBasis::duplicated(ControlBasis::monomial(2)), g);
  EXPECT_EQ(d.col(0), d.col(1));
  EXPECT_EQ(d.col(2), d.col(3));
  EXPECT_EQ(d.col(0), b.col(0));
  EXPECT_EQ(d.col(2), b.col(1));
}

TEST(RankCheck, Examples) {
  const UniformGrid g(0.0, 1.0, 8);
  const auto ind = basis_rank_check(ControlBasis::indicator(8), g);
  EXPECT_EQ(ind.rank, 8u);
  EXPECT_TRUE(ind.full_rank);

  const auto dup = basis_rank_check(ControlBasis::duplicated(ControlBasis::constant()), g);
  EXPECT_EQ(dup.rank, 1u);
  EXPECT_FALSE(dup.full_rank);

  const auto mono = basis_rank_check(ControlBasis::monomial(4), g);
  EXPECT_EQ(mono.rank, 4u);
  EXPECT_TRUE(mono.full_rank);
  // Independent oracle: SVD of a hand-built Vandermonde matrix.
  Eigen::MatrixXd v(8, 4);
  for (int k = 0; k < 8; ++k) {
    for (int j = 0; j < 4; ++j) v(k, j) = std::pow(k / 8.0, j);
  }
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(v).singularValues();
  ASSERT_EQ(mono.singular_values.size(), 4u);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(mono.singular_values[j], sv(j), 1e-12);

  EXPECT_THROW(basis_rank_check(ControlBasis::monomial(9), g), DimensionError);
}

TEST(VerifyEquivalence, RandomPointPasses) {
  std::mt19937_64 rng(16);
  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const UniformGrid g = UniformGrid::over(p, 16);
  const auto v = verify_equivalence(p, g, oracle::random_vector(16, rng), 1e-6);
  EXPECT_LE(v.fd_deviation, 1e-6);
  EXPECT_EQ(v.identity_defect, 0.0);
  EXPECT_TRUE(v.passed);
}

TEST(VerifyEquivalence, UnitStepGridIsExact) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  const UniformGrid g = UniformGrid::over(p, 1);
  ASSERT_EQ(g.h(), 1.0);
  const auto r = adjoint_gradient(p, g, std::vector<double>{0.4});
  EXPECT_EQ(r.gradient, r.stationarity);
  EXPECT_TRUE(verify_equivalence(p, g, std::vector<double>{0.4}).passed);
}

TEST(VerifyEquivalence, CorruptedCostatesFail) {
  const auto p = builtin_problem(TestProblemId::cubic_drag);
  const UniformGrid g = UniformGrid::over(p, 10);
  const std::vector<double> u(10, 0.2);
  auto c = adjoint_gradient(p, g, u).costates;
  c.costates[4] += 0.5;
  const auto v = verify_equivalence_with_costates(p, g, u, c);
  EXPECT_FALSE(v.passed);
  EXPECT_FALSE(v.fd_passed);
  EXPECT_FALSE(v.identity_passed);
  EXPECT_GT(v.fd_deviation, 1e-2);
}

TEST(Theorem1Bound, Examples) {
  EXPECT_NEAR(stationarity_bound(1e-6, 0.01), 1e-4, 1e-4 * 1e-12);
  EXPECT_THROW(stationarity_bound(1e-6, 0.0), InvalidArgument);

  const auto p = builtin_problem(TestProblemId::linear_integrator);
  const UniformGrid g = UniformGrid::over(p, 10);
  const auto r = adjoint_gradient(p, g, std::vector<double>(10, 0.0));
  const auto b = theorem1_bound(r, g);
  EXPECT_DOUBLE_EQ(b.epsilon, 0.1);
  EXPECT_DOUBLE_EQ(b.bound, 1.0);
  EXPECT_EQ(b.max_stationarity, 1.0);
  EXPECT_TRUE(b.satisfied);

  GradientReport zero;
  const auto bz = theorem1_bound(zero, g);
  EXPECT_EQ(bz.epsilon, 0.0);
  EXPECT_EQ(bz.bound, 0.0);
  EXPECT_TRUE(bz.satisfied);
}

TEST(Theorem1Bound, TightOnRandomReports) {
  std::mt19937_64 rng(34);
  for (auto id : kAllTestProblems) {
    const auto p = builtin_problem(id);
    for (std::size_t n : {3u, 10u, 50u}) {
      const UniformGrid g = UniformGrid::over(p, n);
      const auto r = adjoint_gradient(p, g, oracle::random_vector(n, rng));
      const auto b = theorem1_bound(r, g);
      EXPECT_TRUE(b.satisfied);
      EXPECT_NEAR(b.max_stationarity * g.h(), r.grad_inf_norm, 4 * kEps * r.grad_inf_norm);
    }
  }
}

TEST(AdaptiveGrid, IdentityRuleHasNoNoise) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  std::vector<double> u(16);
  for (std::size_t k = 0; k < 16; ++k) u[k] = -1.0 + 0.5 * k / 15.0;
  const auto d = adaptive_gradient_decomposition(p, AdaptationRule::identity, u);
  EXPECT_LE(d.noise_norm, 1e-7);
  // Same code path as the uniform adjoint gradient.
  EXPECT_EQ(d.naive, adjoint_gradient(p, UniformGrid::over(p, 16), u).gradient);
}

TEST(AdaptiveGrid, ArclengthRuleExposesNoise) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  std::vector<double> u(16);
  for (std::size_t k = 0; k < 16; ++k) u[k] = -1.0 + 0.5 * k / 15.0;
  const auto d = adaptive_gradient_decomposition(p, AdaptationRule::arclength, u);
  EXPECT_GT(d.noise_norm, 10 * 1e-5);
  EXPECT_NEAR(d.grid.tf(), 1.0, 1e-12);
  EXPECT_EQ(d.grid.intervals(), 16u);
  // The naive gradient is the frozen-grid adjoint gradient; check it against the scripted oracle.
  const auto fd = oracle::fd_cost_gradient(oracle::damped_linear(), u, d.grid.steps());
  EXPECT_LE(oracle::max_abs_diff(fd, d.naive), 1e-9);
}

TEST(AdaptiveGrid, ArclengthStepsFollowRule) {
  const auto p = builtin_problem(TestProblemId::damped_linear);
  const std::vector<double> u{0.0, 2.0, -3.0, 1.0};
  const auto grid = adapt_grid(p, AdaptationRule::arclength, u);
  const auto x = oracle::euler_states(oracle::damped_linear().f, 1.0, u, oracle::uniform_steps(4));
  std::vector<double> w(4);
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    w[k] = 1.0 / (1.0 + std::abs(-x[k] + u[k]));
    total += w[k];
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(grid.steps()[k], w[k] / total, 1e-14);
}

TEST(AdaptiveGrid, RuleNamesRoundTrip) {
  for (auto r : {AdaptationRule::identity, AdaptationRule::arclength}) {
    EXPECT_EQ(parse_adaptation_rule(to_string(r)), r);
  }
  EXPECT_THROW(parse_adaptation_rule("curvature"), InvalidArgument);
}
