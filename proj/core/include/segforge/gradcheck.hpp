#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

struct GradCheckOptions {
  /// Central-difference step; the step for coordinate i is step * max(1, |x_i|).
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Reduce non-scalar outputs with a fixed random projection sum(f(x) * r).
  /// When false the projection weights are all ones.
  bool random_projection = true;
  std::uint64_t seed = 1234;
  /// Coordinates checked per tensor; 0 checks all of them.
  std::size_t max_coordinates = 0;
  /// Also compare one random directional derivative per tensor, which touches
  /// every coordinate at once.
  bool directional = false;
  /// Use the fourth-order five-point stencil
  ///   (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h
  /// instead of the plain central difference. Its truncation error is small
  /// enough to allow a larger step, which keeps round-off out of the estimate
  /// for deep networks whose loss sums many terms.
  bool fourth_order = false;
  /// Widen the step for coordinates with small analytic gradients so that the
  /// round-off in the loss, about a few ulps of |loss|, stays below a tenth of
  /// the tolerance: h_i = max(h, 40 eps |loss| / (tolerance |g_i|)), capped at
  /// 100 h. Deep ReLU networks need this because a uniformly larger step
  /// straddles activation kinks.
  bool adaptive_step = false;
  /// A coordinate that misses the tolerance is re-estimated with second-order
  /// one-sided stencils, then at h/8 and 8h, before it counts as a failure. A
  /// ReLU or max-pool kink near the point spoils the central difference on one
  /// side only, while a wrong analytic gradient disagrees with every estimate.
  bool retry_steps = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;  // flat index; SIZE_MAX for a directional check
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
  /// Coordinates that needed a second or third step size to pass.
  std::size_t coordinates_retried = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, 1e-8)
///
/// The checker treats a coordinate as agreeing outright when both values are
/// below the resolution of the difference quotient, 4 eps |loss| / (2 h).
double relative_error(double analytic, double numeric);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Checks the gradient of a scalar-valued closure with respect to each input.
///
/// loss() must read the inputs through the given tensor handles; the checker
/// perturbs their storage in place and restores it. loss() is evaluated twice
/// at the unperturbed point first: any difference throws OracleError.
GradCheckReport check_gradients(const std::function<Tensor()>& loss, const std::vector<NamedTensor>& inputs,
                                const GradCheckOptions& options = {});

/// Checks f at x, projecting a non-scalar output onto a scalar.
GradCheckReport numeric_grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                   const GradCheckOptions& options = {});

SEGFORGE_NAMESPACE_END
