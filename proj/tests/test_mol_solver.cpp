#include <gtest/gtest.h>

#include "mol/certify.hpp"
#include "mol/dataset.hpp"
#include "mol/errors.hpp"
#include "mol/mol_solver.hpp"
#include "mol/random.hpp"
#include "oracles.hpp"

using namespace mol;

namespace {

struct Problem {
  OperatorSpec spec;
  ComplexImage x_gt, b;
};

Problem masked_problem(std::size_t n, std::uint64_t seed) {
  Problem p;
  p.spec = make_masked_fourier({n, n}, make_variable_density_mask(n, n, 2.0, 0.1, seed));
  p.x_gt = make_phantom(n, n, seed + 1);
  p.b = apply(p.spec, p.x_gt);
  return p;
}

DenoiserNet sn_net(int layers, int hidden, std::size_t n, double target, std::uint64_t seed) {
  auto net = make_xavier_net({layers, hidden, 3}, seed);
  Rng rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& l : net.layers) {
    for (double& b : l.bias) b = u(rng);
  }
  spectral_normalize(net, target, {n, n});
  return net;
}

}  // namespace

TEST(StepSize, AlphaMaxValues) {
  EXPECT_GE(alpha_max(0.1), 0.0554);
  EXPECT_LE(alpha_max(0.1), 0.0555);
  EXPECT_DOUBLE_EQ(alpha_max(1.0), 2.0);
  EXPECT_NEAR(alpha_max(3.0 - std::sqrt(5.0)), 1.0, 1e-12);
  EXPECT_THROW(alpha_max(0.0), std::invalid_argument);
  EXPECT_THROW(alpha_max(1.5), std::invalid_argument);
}

TEST(StepSize, LipschitzFactorValues) {
  EXPECT_NEAR(lipschitz_T(0.1, 0.055, 1.0, 0.0), std::sqrt(1 - 0.011 + 0.055 * 0.055 * 3.61), 1e-15);
  EXPECT_NEAR(lipschitz_T(0.1, 0.055, 1.0, 0.0), 0.99996, 1e-5);
  EXPECT_EQ(lipschitz_T(0.3, 0.0, 1.0, 0.0), 1.0);
  EXPECT_EQ(lipschitz_T(0.3, 0.0, 1.0, 1.0), 0.5);
  // Below one exactly when alpha < alpha_max.
  EXPECT_LT(lipschitz_R(0.1, 0.99 * alpha_max(0.1)), 1.0);
  EXPECT_GT(lipschitz_R(0.1, 1.01 * alpha_max(0.1)), 1.0);
}

TEST(TMol, IdentityDenoiserKeepsConsistentImage) {
  auto p = masked_problem(8, 1);
  MolConfig cfg;
  const auto net = make_scaled_identity_net(1.0);
  EXPECT_LT(norm(t_mol_apply(net, p.spec, cfg, p.x_gt, p.b) - p.x_gt), 1e-12 * norm(p.x_gt));
}

TEST(TMol, ZeroStepReturnsInput) {
  auto p = masked_problem(8, 2);
  MolConfig cfg;
  cfg.alpha = 0.0;
  auto x = random_complex({8, 8}, 3);
  EXPECT_LT(norm(t_mol_apply(make_zero_net({2, 3, 3}), p.spec, cfg, x, p.b) - x), 1e-14 * norm(x));
}

TEST(TMol, IdentityOperatorZeroNetIsScalarAffineMap) {
  auto spec = make_identity({4, 4});
  auto b = random_complex({4, 4}, 4);
  auto x = random_complex({4, 4}, 5);
  MolConfig cfg;
  cfg.alpha = 0.3;
  cfg.lambda = 2.0;
  const auto zero = make_zero_net({2, 3, 3});
  const double a = cfg.alpha, l = cfg.lambda;
  auto y = t_mol_apply(zero, spec, cfg, x, b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(std::abs(y[i] - ((1 - a) * x[i] + a * l * b[i]) / (1 + a * l)), 0.0, 1e-14);
  }
  // Fixed point lambda b / (1 + lambda).
  cfg.kappa = 1e-12;
  cfg.max_iter_forward = 1000;
  auto fwd = forward_deq(zero, spec, cfg, b);
  ASSERT_TRUE(fwd.converged);
  EXPECT_LT(norm(fwd.x_star - (l / (1 + l)) * b), 1e-10 * norm(b));
}

TEST(ForwardDeq, IdentityDenoiserFixesMeasurement) {
  // A = I, H = I: x -> (x + alpha lambda b) / (1 + alpha lambda), fixed point b.
  auto spec = make_identity({6, 6});
  auto b = random_complex({6, 6}, 6);
  MolConfig cfg;
  cfg.kappa = 1e-13;
  cfg.max_iter_forward = 2000;
  auto fwd = forward_deq(make_scaled_identity_net(1.0), spec, cfg, b);
  ASSERT_TRUE(fwd.converged);
  EXPECT_LT(norm(fwd.x_star - b), 1e-10 * norm(b));
  // Error shrinks by exactly 1 / (1 + alpha lambda) per step.
  const double rate = 1.0 / (1.0 + cfg.alpha * cfg.lambda);
  for (std::size_t k = 1; k < 10; ++k) {
    EXPECT_NEAR(fwd.residual_trace[k] / fwd.residual_trace[k - 1], rate, 1e-3);
  }
}

TEST(ForwardDeq, TraceAndFlagsConsistent) {
  auto p = masked_problem(8, 7);
  auto net = sn_net(3, 4, 8, 0.9, 8);
  MolConfig cfg;
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  ASSERT_FALSE(fwd.residual_trace.empty());
  EXPECT_EQ(int(fwd.residual_trace.size()), fwd.nfe);
  EXPECT_TRUE(fwd.converged);
  EXPECT_LE(fwd.residual_trace.back(), cfg.kappa);
  cfg.max_iter_forward = 3;
  auto capped = forward_deq(net, p.spec, cfg, p.b);
  EXPECT_FALSE(capped.converged);
  EXPECT_EQ(capped.nfe, 3);
}

TEST(ForwardDeq, TighterToleranceNeedsMoreIterations) {
  auto p = masked_problem(8, 9);
  auto net = sn_net(3, 4, 8, 0.9, 10);
  MolConfig loose, tight;
  tight.kappa = 1e-8;
  tight.max_iter_forward = 5000;
  EXPECT_GT(forward_deq(net, p.spec, tight, p.b).nfe, forward_deq(net, p.spec, loose, p.b).nfe);
}

TEST(ForwardDeq, ContractionOnRandomPairs) {
  auto p = masked_problem(16, 11);
  auto net = sn_net(5, 8, 16, 0.9, 12);
  MolConfig cfg;
  const double lt = lipschitz_T(cfg.m, cfg.alpha, cfg.lambda, p.spec.mu_min);
  EXPECT_LE(max_contraction_ratio(net, p.spec, cfg, p.b, 50, 13), lt + 1e-6);
}

TEST(ForwardDeq, UniqueFixedPointFromRandomStarts) {
  auto p = masked_problem(16, 14);
  auto net = sn_net(5, 8, 16, 0.9, 15);
  MolConfig cfg;
  cfg.kappa = 1e-8;
  cfg.max_iter_forward = 5000;
  auto u = fixed_point_spread(net, p.spec, cfg, p.b, 10, 16);
  EXPECT_TRUE(u.all_converged);
  EXPECT_LE(u.max_relative_spread, 10 * 1e-6);
}

TEST(ForwardDeq, GeometricConvergenceSlope) {
  auto p = masked_problem(16, 17);
  auto net = sn_net(5, 8, 16, 0.9, 18);
  MolConfig cfg;
  cfg.kappa = 1e-8;
  cfg.max_iter_forward = 5000;
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  ASSERT_GE(fwd.residual_trace.size(), 20u);
  EXPECT_LE(log_residual_slope(fwd.residual_trace, 20),
            std::log(lipschitz_T(cfg.m, cfg.alpha, cfg.lambda, p.spec.mu_min)) + 1e-3);
}

TEST(ForwardDeq, FixedPointIsStationary) {
  // At a fixed point, alpha (lambda A^H(Ax - b) + F(x)) = (I + alpha lambda A^H A)(x - T(x)).
  auto p = masked_problem(16, 19);
  auto net = sn_net(5, 8, 16, 0.9, 20);
  MolConfig cfg;
  cfg.kappa = 1e-10;
  cfg.max_iter_forward = 5000;
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  ASSERT_TRUE(fwd.converged);
  const double step = norm(fwd.x_star - t_mol_apply(net, p.spec, cfg, fwd.x_star, p.b));
  const double c = (1 + cfg.alpha * cfg.lambda * p.spec.mu_max) / cfg.alpha;
  EXPECT_LE(stationarity_residual(net, p.spec, cfg, fwd.x_star, p.b), c * step * (1 + 1e-6) + 1e-12);
  EXPECT_LE(stationarity_residual(net, p.spec, cfg, fwd.x_star, p.b), 1e-6 * norm(fwd.x_star));
}

TEST(BackwardDeq, ZeroLossGradientGivesZero) {
  auto p = masked_problem(8, 21);
  auto net = sn_net(3, 4, 8, 0.9, 22);
  MolConfig cfg;
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  auto g = backward_deq(net, p.spec, cfg, p.b, fwd.x_star, ComplexImage({8, 8}));
  EXPECT_EQ(g.theta.norm(), 0.0);
  EXPECT_EQ(g.lambda, 0.0);
  EXPECT_TRUE(g.converged);
}

TEST(BackwardDeq, AdjointMatchesDenseSolveOnAffineNet) {
  const std::size_t n = 6;
  auto p = masked_problem(n, 23);
  auto net = sn_net(3, 3, n, 0.9, 24);
  for (auto& l : net.layers) {
    for (double& b : l.bias) b = 50.0;  // keeps every ReLU active
  }
  MolConfig cfg;
  cfg.alpha = 0.3;
  cfg.kappa = 1e-13;
  cfg.max_iter_backward = 5000;
  cfg.max_iter_forward = 5000;
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  ASSERT_TRUE(fwd.converged);
  const Shape shape{n, n};
  Eigen::MatrixXd jh = Eigen::MatrixXd::Identity(2 * n * n, 2 * n * n);
  for (const auto& l : net.layers) jh = oracle::dense_conv(l, int(n), int(n)) * jh;
  const Eigen::MatrixXd q = oracle::dense_real(
      [&](const ComplexImage& v) { return solve_normal(p.spec, v, cfg.alpha * cfg.lambda).x; }, shape);
  const Eigen::Index dim = Eigen::Index(2 * n * n);
  const Eigen::MatrixXd jt = q * ((1 - cfg.alpha) * Eigen::MatrixXd::Identity(dim, dim) + cfg.alpha * jh);
  auto g = random_complex(shape, 25);
  const Eigen::VectorXd ref = (Eigen::MatrixXd::Identity(dim, dim) - jt.transpose()).lu().solve(oracle::to_real(g));
  auto adj = solve_adjoint(net, p.spec, cfg, fwd.x_star, g);
  ASSERT_TRUE(adj.converged);
  EXPECT_LT((oracle::to_real(adj.q) - ref).norm(), 1e-6 * ref.norm());
}

TEST(BackwardDeq, GradientMatchesFiniteDifferences) {
  const std::size_t n = 8;
  auto p = masked_problem(n, 26);
  auto net = sn_net(3, 3, n, 0.9, 27);
  MolConfig cfg;
  cfg.alpha = 0.3;
  cfg.kappa = 1e-12;
  cfg.max_iter_forward = 10000;
  cfg.max_iter_backward = 10000;
  auto loss = [&](const DenoiserNet& nt, const MolConfig& c) {
    auto f = forward_deq(nt, p.spec, c, p.b);
    EXPECT_TRUE(f.converged);
    return norm_squared(f.x_star - p.x_gt);
  };
  auto fwd = forward_deq(net, p.spec, cfg, p.b);
  auto g = backward_deq(net, p.spec, cfg, p.b, fwd.x_star, 2.0 * (fwd.x_star - p.x_gt));
  ASSERT_TRUE(g.converged);
  const auto analytic = g.theta.flatten();
  auto params = flatten_parameters(net);
  std::vector<double> fd(params.size());
  const double h = 1e-6;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto pp = params;
    DenoiserNet probe = net;
    pp[k] = params[k] + h;
    assign_parameters(probe, pp);
    const double up = loss(probe, cfg);
    pp[k] = params[k] - h;
    assign_parameters(probe, pp);
    fd[k] = (up - loss(probe, cfg)) / (2 * h);
  }
  double num = 0, den = 0;
  for (std::size_t k = 0; k < fd.size(); ++k) {
    num += (analytic[k] - fd[k]) * (analytic[k] - fd[k]);
    den += fd[k] * fd[k];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);

  MolConfig up = cfg, dn = cfg;
  up.lambda += 1e-5;
  dn.lambda -= 1e-5;
  const double fd_lambda = (loss(net, up) - loss(net, dn)) / 2e-5;
  EXPECT_NEAR(g.lambda, fd_lambda, 1e-4 * std::max(1.0, std::abs(fd_lambda)));
}

TEST(MolConfig, ValidationRejectsBadFields) {
  MolConfig c;
  c.m = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.kappa = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
