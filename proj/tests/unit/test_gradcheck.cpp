#include <gtest/gtest.h>

#include <cmath>

#include "segforge/error.hpp"
#include "segforge/gradcheck.hpp"
#include "segforge/gradcheck_suite.hpp"
#include "segforge/ops.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

// y = 3x recorded with a deliberately wrong backward (2 instead of 3).
Tensor broken_triple(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y.data()[i] = 3 * x.data()[i];
  if (detail::needs_grad({&x})) {
    detail::record("broken_triple", {x}, y, [x](std::span<const Real> g) {
      std::vector<Real> gx(g.begin(), g.end());
      for (Real& v : gx) v *= 2;
      detail::accumulate_grad(x, gx);
    });
  }
  return y;
}

}  // namespace

TEST(RelativeError, UsesFloorInDenominator) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(GradCheck, IdentityHasZeroError) {
  Tensor x = testutil::random_tensor(Shape{2, 3, 4, 4}, 1);
  GradCheckOptions o;
  o.random_projection = false;
  auto r = numeric_grad_check([](const Tensor& t) { return scale(t, Real{1}); }, x, o);
  EXPECT_TRUE(r.passed);
  // Only the round-off of the difference quotient remains.
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates_checked, x.numel());
}

TEST(GradCheck, SigmoidAtZero) {
  Tensor x(Shape{1}, Real{0});
  GradCheckOptions o;
  o.random_projection = false;
  auto r = numeric_grad_check([](const Tensor& t) { return sigmoid(t); }, x, o);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.analytic, 0.25, 1e-15);
  EXPECT_NEAR(r.numeric, 0.25, 1e-8);
}

TEST(GradCheck, DilatedConvPassesTightTolerance) {
  Tensor x = testutil::random_tensor(Shape{1, 2, 7, 7}, 2);
  Tensor w = testutil::random_tensor(Shape{2, 2, 3, 3}, 3);
  GradCheckOptions o;
  o.tolerance = 1e-5;
  EXPECT_TRUE(numeric_grad_check([&](const Tensor& t) { return conv2d(t, w, Tensor(), {1, 2, 2}); }, x, o).passed);
}

TEST(GradCheck, CatchesWrongBackward) {
  Tensor x = testutil::random_tensor(Shape{3, 2}, 4);
  auto r = numeric_grad_check(broken_triple, x);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_relative_error, 1.0 / 3.0, 1e-6);
  EXPECT_EQ(r.worst_tensor, "x");
  // Retries cannot rescue a wrong gradient.
  GradCheckOptions o;
  o.retry_steps = true;
  o.adaptive_step = true;
  o.directional = true;
  EXPECT_FALSE(numeric_grad_check(broken_triple, x, o).passed);
}

TEST(GradCheck, NonDeterministicLossIsOracleError) {
  Tensor x = testutil::random_tensor(Shape{2}, 5);
  int calls = 0;
  auto f = [&](const Tensor& t) { return scale(t, Real(1 + calls++)); };
  EXPECT_THROW(numeric_grad_check(f, x), OracleError);
}

TEST(GradCheck, RestoresInputsAndFlags) {
  Tensor x = testutil::random_tensor(Shape{2, 2}, 6);
  Tensor before = x.clone();
  numeric_grad_check([](const Tensor& t) { return sigmoid(t); }, x);
  EXPECT_TRUE(testutil::bitwise_equal(x, before));
  EXPECT_FALSE(x.requires_grad());
  EXPECT_FALSE(x.has_grad());
}

TEST(GradCheck, SubsamplingLimitsCoordinates) {
  Tensor x = testutil::random_tensor(Shape{50}, 7);
  GradCheckOptions o;
  o.max_coordinates = 10;
  o.directional = true;
  auto r = numeric_grad_check([](const Tensor& t) { return mul(t, t); }, x, o);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.coordinates_checked, 11u);
}

TEST(GradCheckSuite, EveryOpAndBlockPasses) {
  std::string names;
  for (const auto& c : gradcheck_cases()) {
    if (c.kind == "model") continue;
    names += (names.empty() ? "" : ",") + c.name;
  }
  const auto results = run_gradcheck_suite(names, GradCheckOptions{});
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) {
    EXPECT_TRUE(r.report.passed) << r.name << " err " << r.report.max_relative_error << " at " << r.report.worst_tensor
                                 << "[" << r.report.worst_index << "]";
  }
}

TEST(GradCheckSuite, CoversAllKindsAndRejectsUnknownNames) {
  bool op = false, block = false, model = false;
  for (const auto& c : gradcheck_cases()) {
    op |= c.kind == "op";
    block |= c.kind == "block";
    model |= c.kind == "model";
  }
  EXPECT_TRUE(op && block && model);
  EXPECT_THROW(run_gradcheck_suite("conv2d,no_such_case", GradCheckOptions{}), ConfigError);
}
