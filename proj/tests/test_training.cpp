#include <gtest/gtest.h>

#include <cmath>

#include "mol/dataset.hpp"
#include "mol/errors.hpp"
#include "mol/lipschitz.hpp"
#include "mol/metrics.hpp"
#include "mol/random.hpp"
#include "mol/training.hpp"
#include "oracles.hpp"

using namespace mol;

namespace {

struct Split {
  std::vector<Sample> train, val;
};

Split tiny_split(std::size_t n, int count, std::uint64_t seed, OperatorKind kind = OperatorKind::kMaskedFourier) {
  DatasetConfig dc;
  dc.image_size = n;
  dc.count = count;
  dc.seed = seed;
  dc.op.kind = kind;
  auto all = make_dataset(dc);
  Split s;
  s.train.assign(all.begin(), all.end() - 2);
  s.val.assign(all.end() - 2, all.end());
  return s;
}

bool same_history(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].train_loss != b[i].train_loss || a[i].val_psnr != b[i].val_psnr || a[i].lambda != b[i].lambda ||
        a[i].lip_p != b[i].lip_p || a[i].mean_nfe != b[i].mean_nfe)
      return false;
  }
  return true;
}

}  // namespace

TEST(Adam, FirstStepsOnUnitGradient) {
  std::vector<double> p{1.0, -2.0};
  AdamMoments m;
  adam_step(p, {1.0, -4.0}, m, 0.1, 1);
  EXPECT_NEAR(p[0], 1.0 - 0.1 / (1 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 4 / (4 + 1e-8), 1e-15);
  adam_step(p, {1.0, -4.0}, m, 0.1, 2);
  EXPECT_NEAR(p[0], 0.8, 1e-8);
  EXPECT_NEAR(p[1], -1.8, 1e-8);
}

TEST(Adam, MomentsFollowRecursion) {
  std::vector<double> p{0.0};
  AdamMoments m;
  const double g[3] = {0.5, -1.0, 2.0};
  double m1 = 0, m2 = 0, x = 0;
  for (int t = 1; t <= 3; ++t) {
    adam_step(p, {g[t - 1]}, m, 0.01, t);
    m1 = 0.9 * m1 + 0.1 * g[t - 1];
    m2 = 0.999 * m2 + 0.001 * g[t - 1] * g[t - 1];
    x -= 0.01 * (m1 / (1 - std::pow(0.9, t))) / (std::sqrt(m2 / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p[0], x, 1e-15);
  EXPECT_THROW(adam_step(p, {1.0, 2.0}, m, 0.01, 4), std::invalid_argument);
}

TEST(Metrics, PsnrOfConstantOffset) {
  auto ref = make_phantom(16, 16, 1);
  const Complex c(0.003, -0.004);
  auto x = ref;
  for (auto& v : x) v += c;
  double peak = 0;
  for (const auto& v : ref) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(psnr(x, ref), 20 * std::log10(peak / std::abs(c)), 1e-9);
  EXPECT_EQ(psnr(ref, ref), kPsnrCap);
  EXPECT_THROW(psnr(x, ComplexImage({16, 16})), std::invalid_argument);
}

TEST(Metrics, SsimSingleWindowClosedForm) {
  auto ref = random_complex({7, 7}, 2);
  auto x = random_complex({7, 7}, 3);
  auto a = magnitude(x), r = magnitude(ref);
  double mx = 0, mr = 0, peak = 0;
  for (std::size_t i = 0; i < 49; ++i) {
    mx += a[i] / 49;
    mr += r[i] / 49;
    peak = std::max(peak, r[i]);
  }
  double vx = 0, vr = 0, cov = 0;
  for (std::size_t i = 0; i < 49; ++i) {
    vx += (a[i] - mx) * (a[i] - mx) / 49;
    vr += (r[i] - mr) * (r[i] - mr) / 49;
    cov += (a[i] - mx) * (r[i] - mr) / 49;
  }
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  const double want = (2 * mx * mr + c1) * (2 * cov + c2) / ((mx * mx + mr * mr + c1) * (vx + vr + c2));
  EXPECT_NEAR(ssim(x, ref), want, 1e-12);
  EXPECT_NEAR(ssim(ref, ref), 1.0, 1e-12);
  EXPECT_THROW(ssim(ComplexImage({6, 6}), ComplexImage({6, 6})), ShapeError);
}

TEST(Validation, HugeLambdaOnIdentityOperatorIsNearExact) {
  auto split = tiny_split(16, 4, 4, OperatorKind::kIdentity);
  TrainConfig cfg;
  auto state = init_train_state({3, 4, 3}, {16, 16}, cfg);
  state.net = make_zero_net({3, 4, 3});
  state.lambda = 1e6;
  auto v = validate(state, split.val, cfg);
  EXPECT_GT(v.psnr, 100.0);
  EXPECT_EQ(v.failures, 0);
  EXPECT_EQ(v.count, 2);
}

TEST(Validation, ThreadCountDoesNotChangeMetrics) {
  auto split = tiny_split(16, 6, 5);
  TrainConfig one, two;
  two.threads = 2;
  auto state = init_train_state({3, 4, 3}, {16, 16}, one);
  auto a = validate(state, split.val, one), b = validate(state, split.val, two);
  EXPECT_EQ(a.psnr, b.psnr);
  EXPECT_EQ(a.ssim, b.ssim);
  EXPECT_EQ(a.mean_nfe, b.mean_nfe);
}

TEST(Training, InitialNetSitsInsideSpectralBall) {
  TrainConfig cfg;
  auto state = init_train_state({5, 8, 3}, {16, 16}, cfg);
  double exact = 1.0;
  for (const auto& l : state.net.layers) exact *= oracle::conv_operator_norm(l, 16, 16);
  EXPECT_LE(exact, 0.9 + 1e-4);
  EXPECT_EQ(state.lambda, cfg.mol.lambda);
}

TEST(Training, ZeroEpochsLeaveStateUntouched) {
  auto split = tiny_split(16, 4, 6);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto state = init_train_state({3, 4, 3}, {16, 16}, cfg);
  const auto before = flatten_parameters(state.net);
  train(state, split.train, split.val, cfg);
  EXPECT_EQ(flatten_parameters(state.net), before);
  EXPECT_EQ(state.lambda, cfg.mol.lambda);
  EXPECT_TRUE(state.history.empty());
}

TEST(Training, SpectralRegimeKeepsBound) {
  auto split = tiny_split(16, 5, 7);
  TrainConfig cfg;
  cfg.regime = Regime::kSN;
  cfg.epochs = 2;
  cfg.lr_theta = 1e-2;
  auto state = init_train_state({3, 4, 3}, {16, 16}, cfg);
  train(state, split.train, split.val, cfg);
  ASSERT_EQ(state.history.size(), 2u);
  for (const auto& r : state.history) EXPECT_LE(r.lip_bound, 0.9 + 1e-4);
  // Warm 20-step power iterations lag behind fast weight changes, so the exact
  // product can sit above the measured one; it still stays below one here.
  double exact = 1.0;
  for (const auto& l : state.net.layers) exact *= oracle::conv_operator_norm(l, 16, 16);
  EXPECT_LT(exact, 1.0);
}

TEST(Training, LambdaStaysAboveFloor) {
  auto split = tiny_split(16, 5, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_lambda = 50.0;
  auto state = init_train_state({3, 4, 3}, {16, 16}, cfg);
  train(state, split.train, split.val, cfg, [&](const EpochRecord& r) { EXPECT_GE(r.lambda, cfg.lambda_floor); });
  EXPECT_GE(state.lambda, cfg.lambda_floor);
}

TEST(Training, BarrierRegimeRecordsFiniteTerms) {
  auto split = tiny_split(16, 5, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_theta = 1e-3;
  auto state = init_train_state({3, 4, 3}, {16, 16}, cfg);
  train(state, split.train, split.val, cfg);
  ASSERT_EQ(state.history.size(), 2u);
  for (const auto& r : state.history) {
    EXPECT_TRUE(std::isfinite(r.barrier));
    EXPECT_TRUE(std::isfinite(r.train_loss));
    EXPECT_GT(r.lip_p, 0.0);
    EXPECT_EQ(r.skipped, 0);
  }
  EXPECT_NEAR(state.history[1].beta, state.history[0].beta * 0.98, 1e-12);
  EXPECT_NEAR(state.history[0].beta, 10.0, 1e-12);
}

TEST(Training, SameSeedSameHistory) {
  auto split = tiny_split(16, 5, 10);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  auto a = init_train_state({3, 4, 3}, {16, 16}, cfg);
  auto b = init_train_state({3, 4, 3}, {16, 16}, cfg);
  train(a, split.train, split.val, cfg);
  train(b, split.train, split.val, cfg);
  EXPECT_TRUE(same_history(a.history, b.history));
  EXPECT_EQ(flatten_parameters(a.net), flatten_parameters(b.net));
}

TEST(TrainConfig, RejectsBadFields) {
  TrainConfig c;
  c.lr_theta = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.sn_target = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(parse_regime("XX"), std::invalid_argument);
  EXPECT_EQ(parse_regime("SN"), Regime::kSN);
}
