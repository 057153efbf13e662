#include <gtest/gtest.h>

#include <cmath>

#include "segforge/error.hpp"
#include "segforge/gradcheck.hpp"
#include "segforge/losses.hpp"
#include "segforge/ops.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

Tensor mask4(std::vector<Real> v) { return Tensor(Shape{1, 1, 2, 2}, std::move(v)); }

// Probabilities strictly inside (0, 1).
Tensor random_prob(Shape s, std::uint64_t seed) { return testutil::random_tensor(s, seed, 0.02, 0.98); }

double scalar_dice_loss(const Tensor& p, const Tensor& g) {
  double pg = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    pg += p.data()[i] * g.data()[i];
    sp += p.data()[i];
    sg += g.data()[i];
  }
  return 1.0 - (2 * pg + 1.0) / (sp + sg + 1.0);
}

}  // namespace

TEST(DiceLoss, HandCase) {
  // Unsmoothed: dice 2 * 1 / (1 + 2) = 2/3.
  EXPECT_NEAR(dice_loss(mask4({1, 0, 0, 0}), mask4({1, 1, 0, 0}), 0.0).item(), 1.0 / 3.0, 1e-9);
  // Default smoothing of 1: 1 - (2 + 1) / (1 + 2 + 1).
  EXPECT_NEAR(dice_loss(mask4({1, 0, 0, 0}), mask4({1, 1, 0, 0})).item(), 0.25, 1e-12);
}

TEST(DiceLoss, PerfectAndDisjoint) {
  Tensor g = testutil::random_mask(Shape{2, 1, 16, 16}, 1);
  EXPECT_LT(dice_loss(g, g).item(), 1e-3);
  Tensor inv = g.clone();
  for (Real& v : inv.data()) v = 1 - v;
  EXPECT_GT(dice_loss(inv, g).item(), 0.99);
}

TEST(DiceLoss, EmptyMasksScoreZeroLoss) {
  Tensor z(Shape{1, 1, 4, 4});
  EXPECT_NEAR(dice_loss(z, z).item(), 0.0, 1e-12);
}

TEST(DiceLoss, MatchesScalarFormulaAndRange) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Tensor p = random_prob(Shape{2, 1, 5, 5}, 10 + s), g = testutil::random_mask(Shape{2, 1, 5, 5}, 40 + s);
    const double l = dice_loss(p, g).item();
    EXPECT_NEAR(l, scalar_dice_loss(p, g), 1e-12);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1.0);
  }
}

TEST(DiceLoss, MonotoneInForegroundProbabilities) {
  Tensor p = random_prob(Shape{1, 1, 6, 6}, 2), g = testutil::random_mask(Shape{1, 1, 6, 6}, 3);
  double prev = dice_loss(p, g).item();
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (g.data()[i] != 1) continue;
    p.data()[i] = std::min(Real(0.999), p.data()[i] + Real(0.3));
    const double now = dice_loss(p, g).item();
    EXPECT_LE(now, prev);
    prev = now;
  }
}

TEST(DiceLoss, RejectsNonBinaryTarget) {
  EXPECT_THROW(dice_loss(mask4({0.5, 0.5, 0.5, 0.5}), mask4({1, 0.5, 0, 0})), ContractError);
}

TEST(DiceLoss, GradientMatchesFiniteDifferences) {
  Tensor g = testutil::random_mask(Shape{2, 1, 4, 4}, 4);
  Tensor p = random_prob(g.shape(), 5);
  GradCheckOptions o;
  o.tolerance = 1e-6;
  EXPECT_TRUE(numeric_grad_check([&](const Tensor& t) { return dice_loss(t, g); }, p, o).passed);
}

TEST(BceLoss, ClosedForms) {
  Tensor half(Shape{1, 1, 2, 2}, Real{0.5});
  EXPECT_NEAR(bce_loss(half, mask4({1, 0, 1, 0})).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(Tensor(Shape{1, 1, 1, 1}, Real{0.9}), Tensor(Shape{1, 1, 1, 1}, Real{1})).item(),
              -std::log(0.9), 1e-12);
  // Clamping keeps hard mistakes finite.
  EXPECT_NEAR(bce_loss(Tensor(Shape{1, 1, 1, 1}, Real{0}), Tensor(Shape{1, 1, 1, 1}, Real{1})).item(),
              -std::log(1e-7), 1e-6);
}

TEST(MseLoss, ZeroOnPerfectAndMean) {
  Tensor g = mask4({1, 0, 1, 1});
  EXPECT_EQ(mse_loss(g, g).item(), 0.0);
  EXPECT_NEAR(mse_loss(mask4({0.5, 0.5, 0.5, 0.5}), g).item(), 0.25, 1e-15);
}

TEST(Losses, CombinedIsSumAndGradientsCheck) {
  Tensor g = testutil::random_mask(Shape{1, 1, 4, 4}, 6);
  Tensor p = random_prob(g.shape(), 7);
  EXPECT_NEAR(compute_loss(LossKind::kBceDice, p, g).item(), bce_loss(p, g).item() + dice_loss(p, g).item(), 1e-14);
  for (LossKind k : {LossKind::kBce, LossKind::kBceDice, LossKind::kMse}) {
    EXPECT_TRUE(numeric_grad_check([&](const Tensor& t) { return compute_loss(k, t, g); }, p).passed) << to_string(k);
  }
}

TEST(Losses, NamesRoundTrip) {
  for (LossKind k : {LossKind::kDice, LossKind::kBce, LossKind::kBceDice, LossKind::kMse}) {
    EXPECT_EQ(parse_loss(to_string(k)), k);
  }
  EXPECT_THROW(parse_loss("hinge"), ConfigError);
}
