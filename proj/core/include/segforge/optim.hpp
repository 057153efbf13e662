#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "segforge/layers.hpp"

SEGFORGE_NAMESPACE_BEGIN

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update of a single parameter at step t (t >= 1):
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   theta -= lr * m_hat / (sqrt(v_hat) + eps)
/// Moment slots are allocated on first use. A non-finite gradient throws
/// NumericalError naming the parameter before anything is modified.
void adam_step(Parameter& param, std::span<const Real> grad, double lr, std::size_t t, const AdamOptions& options = {});

/// Adam over a whole registry. Parameters without an accumulated gradient are
/// treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(std::vector<Parameter>& params, double lr);
  std::size_t steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  std::size_t t_ = 0;
};

struct SgdrOptions {
  bool enabled = true;
  double t0 = 10.0;  // epochs
  double t_mult = 2.0;
  double lr_min = 0.0;

  void validate() const;
};

/// Cosine annealing within one cycle:
///   lr_min + (lr_max - lr_min) (1 + cos(pi t / t_i)) / 2
/// Throws ConfigError for t_i <= 0.
double sgdr_lr(double t, double t_i, double lr_min, double lr_max);

/// Learning rate as a function of fractional epoch. Cycle i has length
/// t0 * t_mult^i; reaching the end of a cycle restarts at lr_max. Disabled
/// schedules return lr_max everywhere.
class SgdrSchedule {
 public:
  SgdrSchedule(SgdrOptions options, double lr_max);

  double lr_at(double epoch) const;

 private:
  SgdrOptions options_;
  double lr_max_;
};

SEGFORGE_NAMESPACE_END
