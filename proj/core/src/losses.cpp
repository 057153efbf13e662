#include "segforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "segforge/error.hpp"
#include "segforge/ops.hpp"

SEGFORGE_NAMESPACE_BEGIN

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kDice:
      return "dice";
    case LossKind::kBce:
      return "bce";
    case LossKind::kBceDice:
      return "bce+dice";
    case LossKind::kMse:
      return "mse";
  }
  return "dice";
}

LossKind parse_loss(const std::string& name) {
  if (name == "dice") return LossKind::kDice;
  if (name == "bce") return LossKind::kBce;
  if (name == "bce+dice") return LossKind::kBceDice;
  if (name == "mse") return LossKind::kMse;
  throw ConfigError("unknown loss '" + name + "' (expected dice, bce, bce+dice or mse)");
}

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* loss) {
  if (!(pred.shape() == target.shape())) {
    throw ContractError(std::string(loss) + ": prediction " + pred.shape().str() + " and target " +
                        target.shape().str() + " differ in shape");
  }
  if (pred.numel() == 0) throw ContractError(std::string(loss) + ": empty input");
  for (Real g : target.data()) {
    if (g != Real{0} && g != Real{1}) throw ContractError(std::string(loss) + ": target mask is not binary");
  }
}

constexpr double kClamp = 1e-7;

}  // namespace

Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth) {
  check_pair(pred, target, "dice_loss");
  auto p = pred.data();
  auto g = target.data();
  double inter = 0.0, psum = 0.0, gsum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<double>(p[i]) * g[i];
    psum += p[i];
    gsum += g[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + gsum + smooth;
  Tensor out = Tensor::scalar(static_cast<Real>(1.0 - num / den));
  check_finite(out, "dice_loss");
  if (detail::needs_grad({&pred})) {
    detail::record("dice_loss", {pred}, out, [pred, target, num, den](std::span<const Real> go) {
      auto g = target.data();
      std::vector<Real> gp(g.size());
      const double inv = 1.0 / (den * den);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gp[i] = static_cast<Real>(go[0] * -(2.0 * g[i] * den - num) * inv);
      }
      detail::accumulate_grad(pred, gp);
    });
  }
  return out;
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "bce_loss");
  auto p = pred.data();
  auto g = target.data();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), kClamp, 1.0 - kClamp);
    acc -= g[i] * std::log(q) + (1.0 - g[i]) * std::log(1.0 - q);
  }
  Tensor out = Tensor::scalar(static_cast<Real>(acc / n));
  check_finite(out, "bce_loss");
  if (detail::needs_grad({&pred})) {
    detail::record("bce_loss", {pred}, out, [pred, target, n](std::span<const Real> go) {
      auto p = pred.data();
      auto g = target.data();
      std::vector<Real> gp(p.size(), Real{0});
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = p[i];
        if (q < kClamp || q > 1.0 - kClamp) continue;
        gp[i] = static_cast<Real>(go[0] * (q - g[i]) / (q * (1.0 - q)) / n);
      }
      detail::accumulate_grad(pred, gp);
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "mse_loss");
  auto p = pred.data();
  auto g = target.data();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - g[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<Real>(acc / n));
  check_finite(out, "mse_loss");
  if (detail::needs_grad({&pred})) {
    detail::record("mse_loss", {pred}, out, [pred, target, n](std::span<const Real> go) {
      auto p = pred.data();
      auto g = target.data();
      std::vector<Real> gp(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        gp[i] = static_cast<Real>(go[0] * 2.0 * (static_cast<double>(p[i]) - g[i]) / n);
      }
      detail::accumulate_grad(pred, gp);
    });
  }
  return out;
}

Tensor compute_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  switch (kind) {
    case LossKind::kDice:
      return dice_loss(pred, target);
    case LossKind::kBce:
      return bce_loss(pred, target);
    case LossKind::kBceDice:
      return add(bce_loss(pred, target), dice_loss(pred, target));
    case LossKind::kMse:
      return mse_loss(pred, target);
  }
  throw ConfigError("unknown loss kind");
}

SEGFORGE_NAMESPACE_END
