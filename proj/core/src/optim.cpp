#include "segforge/optim.hpp"

#include <cmath>
#include <numbers>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

void adam_step(Parameter& param, std::span<const Real> grad, double lr, std::size_t t, const AdamOptions& o) {
  if (t == 0) throw ContractError("adam step index starts at 1");
  auto theta = param.value.data();
  const std::size_t n = theta.size();
  if (!grad.empty() && grad.size() != n) throw ContractError("gradient size mismatch for " + param.name);
  for (Real g : grad) {
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + param.name);
  }
  if (param.adam_m.size() != n) param.adam_m.assign(n, Real{0});
  if (param.adam_v.size() != n) param.adam_v.assign(n, Real{0});

  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    const double m = o.beta1 * param.adam_m[i] + (1.0 - o.beta1) * g;
    const double v = o.beta2 * param.adam_v[i] + (1.0 - o.beta2) * g * g;
    param.adam_m[i] = static_cast<Real>(m);
    param.adam_v[i] = static_cast<Real>(v);
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + o.eps);
    theta[i] = static_cast<Real>(theta[i] - update);
  }
}

void Adam::step(std::vector<Parameter>& params, double lr) {
  // Check everything first so a bad gradient leaves no parameter half-stepped.
  for (const Parameter& p : params) {
    for (Real g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + p.name);
    }
  }
  ++t_;
  for (Parameter& p : params) adam_step(p, p.value.grad(), lr, t_, options_);
}

void SgdrOptions::validate() const {
  if (!(t0 > 0)) throw ConfigError("sgdr t0 must be positive");
  if (!(t_mult >= 1)) throw ConfigError("sgdr t_mult must be >= 1");
  if (!(lr_min >= 0)) throw ConfigError("sgdr lr_min must be >= 0");
}

double sgdr_lr(double t, double t_i, double lr_min, double lr_max) {
  if (!(t_i > 0)) throw ConfigError("sgdr cycle length must be positive");
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t / t_i));
}

SgdrSchedule::SgdrSchedule(SgdrOptions options, double lr_max) : options_(options), lr_max_(lr_max) {
  if (options_.enabled) options_.validate();
}

double SgdrSchedule::lr_at(double epoch) const {
  if (!options_.enabled) return lr_max_;
  double start = 0.0, len = options_.t0;
  while (epoch >= start + len) {
    start += len;
    len *= options_.t_mult;
  }
  return sgdr_lr(epoch - start, len, options_.lr_min, lr_max_);
}

SEGFORGE_NAMESPACE_END
