#pragma once

#include <string>

#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

enum class LossKind { kDice, kBce, kBceDice, kMse };

std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& name);  // dice | bce | bce+dice | mse

/// Soft dice loss over the whole batch:
///   1 - (2 sum(p g) + smooth) / (sum(p) + sum(g) + smooth)
/// pred holds probabilities, target a binary mask of the same shape. A
/// non-binary target is a ContractError.
Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth = 1.0);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
/// Clamped elements pass no gradient.
Tensor bce_loss(const Tensor& pred, const Tensor& target);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Dispatches on kind; kBceDice is bce + dice.
Tensor compute_loss(LossKind kind, const Tensor& pred, const Tensor& target);

SEGFORGE_NAMESPACE_END
