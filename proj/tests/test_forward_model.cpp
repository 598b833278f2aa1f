#include <gtest/gtest.h>

#include "mol/errors.hpp"
#include "mol/fft.hpp"
#include "mol/forward_model.hpp"
#include "mol/random.hpp"
#include "oracles.hpp"

using namespace mol;

namespace {

std::vector<OperatorSpec> all_operators(std::size_t n) {
  const Shape shape{n, n};
  auto mask = make_variable_density_mask(n, n, 2.0, 0.1, 5);
  return {make_identity(shape), make_diagonal_mask(shape, mask), make_masked_fourier(shape, mask),
          make_multicoil_sense(shape, mask, make_coil_maps(n, n, 3, 6)), make_blur_downsample(shape, 3, 2),
          make_blur_downsample(shape, 3, 1)};
}

}  // namespace

TEST(ForwardModel, AdjointIdentityHoldsForEveryKind) {
  for (const auto& spec : all_operators(8)) {
    auto x = random_complex(spec.image_shape, 1);
    auto y = random_complex(spec.measurement_shape(), 2);
    const Complex lhs = inner(apply(spec, x), y);
    const Complex rhs = inner(x, adjoint(spec, y));
    EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-12 * norm(x) * norm(y)) << operator_kind_name(spec.kind);
  }
}

TEST(ForwardModel, MuBoundsBracketDenseSpectrum) {
  for (const auto& spec : all_operators(8)) {
    const auto a = oracle::dense_complex([&](const ComplexImage& x) { return apply(spec, x); }, spec.image_shape);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a.adjoint() * a);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    EXPECT_LE(spec.mu_min, lo + 1e-9) << operator_kind_name(spec.kind);
    EXPECT_LE(spec.mu_max, hi * (1 + 1e-12)) << operator_kind_name(spec.kind);
    EXPECT_GE(spec.mu_max, hi * (1 - 1e-2)) << operator_kind_name(spec.kind);
  }
}

TEST(ForwardModel, MaskedFourierMuMinIsZeroWhenUndersampled) {
  auto mask = make_variable_density_mask(16, 16, 2.0, 0.08, 1);
  auto spec = make_masked_fourier({16, 16}, mask);
  EXPECT_EQ(spec.mu_min, 0.0);
  EXPECT_NEAR(spec.mu_max, 1.0, 1e-9);
}

TEST(ForwardModel, MaskHasRequestedSampleCount) {
  auto mask = make_variable_density_mask(32, 32, 2.0, 0.08, 3);
  double ones = 0;
  for (double v : mask) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    ones += v;
  }
  EXPECT_EQ(ones, 512.0);
  EXPECT_EQ(mask[0], 1.0);  // DC sampled
  EXPECT_EQ(mask, make_variable_density_mask(32, 32, 2.0, 0.08, 3));
}

TEST(ForwardModel, CoilMapsSumToOne) {
  auto maps = make_coil_maps(12, 12, 4, 2);
  for (std::size_t i = 0; i < 144; ++i) {
    double s = 0;
    for (const auto& m : maps) s += std::norm(m[i]);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ForwardModel, ClosedFormProxMatchesCg) {
  for (const auto& spec : all_operators(8)) {
    if (!spec.has_closed_form_prox()) continue;
    auto u = random_complex(spec.image_shape, 3);
    auto b = random_complex(spec.measurement_shape(), 4);
    auto closed = prox_data(spec, u, b, 0.055, 2.0);
    SolveOptions cg;
    cg.force_cg = true;
    cg.cg.tol = 1e-13;
    auto iter = prox_data(spec, u, b, 0.055, 2.0, cg);
    EXPECT_TRUE(closed.closed_form);
    EXPECT_FALSE(iter.closed_form);
    EXPECT_LT(norm(closed.x - iter.x), 1e-8 * norm(closed.x)) << operator_kind_name(spec.kind);
  }
}

TEST(ForwardModel, SolveNormalMatchesDenseSolve) {
  for (const auto& spec : all_operators(6)) {
    auto rhs = random_complex(spec.image_shape, 8);
    const double c = 0.7;
    auto r = solve_normal(spec, rhs, c);
    const auto a = oracle::dense_complex([&](const ComplexImage& x) { return apply(spec, x); }, spec.image_shape);
    const Eigen::Index n = a.cols();
    Eigen::MatrixXcd sys = Eigen::MatrixXcd::Identity(n, n) + c * a.adjoint() * a;
    Eigen::VectorXcd ref = sys.ldlt().solve(oracle::to_vec(rhs));
    EXPECT_LT((oracle::to_vec(r.x) - ref).norm(), 1e-8 * ref.norm()) << operator_kind_name(spec.kind);
  }
}

TEST(ForwardModel, MaskedFourierProxIsKspaceDivision) {
  auto mask = make_variable_density_mask(8, 8, 2.0, 0.1, 2);
  auto spec = make_masked_fourier({8, 8}, mask);
  auto u = random_complex({8, 8}, 1);
  auto b = project_measurement(spec, random_complex({8, 8}, 2));
  const double a = 0.1, l = 3.0;
  auto x = prox_data(spec, u, b, a, l).x;
  auto ku = oracle::naive_dft2(u);
  ComplexImage kx(ku.shape());
  for (std::size_t i = 0; i < 64; ++i) kx[i] = (ku[i] + a * l * mask[i] * b[i]) / (1.0 + a * l * mask[i]);
  auto ref = oracle::naive_dft2(kx, true);
  EXPECT_LT(norm(x - ref), 1e-12 * norm(ref));
}

TEST(ForwardModel, SenseInitIsScaledRegularizedInverse) {
  auto spec = make_identity({4, 4});
  auto b = random_complex({4, 4}, 3);
  auto x = sense_init(spec, b, 100.0);
  EXPECT_LT(norm(x - (100.0 / 101.0) * b), 1e-14);
}

TEST(ForwardModel, ShapeErrors) {
  auto spec = make_identity({4, 4});
  EXPECT_THROW(apply(spec, ComplexImage({4, 5})), ShapeError);
  EXPECT_THROW(make_diagonal_mask({4, 4}, std::vector<double>(15, 1.0)), std::invalid_argument);
  EXPECT_THROW(parse_operator_kind("radial"), std::invalid_argument);
}

TEST(ForwardModel, ProjectMeasurementZeroesUnsampled) {
  auto mask = make_variable_density_mask(8, 8, 4.0, 0.1, 2);
  auto spec = make_masked_fourier({8, 8}, mask);
  auto y = project_measurement(spec, random_complex({8, 8}, 1));
  for (std::size_t i = 0; i < 64; ++i) {
    if (mask[i] == 0.0) EXPECT_EQ(y[i], Complex(0, 0));
  }
  EXPECT_LT(norm(apply(spec, adjoint(spec, y)) - y), 1e-12 * norm(y));
}
