#pragma once

#include "vgseg/autodiff/ops.hpp"

namespace vgseg::model {

inline constexpr double kDiceSmooth = 1e-6;

// mean(-beta y log p - (1 - y) log(1 - p)) with p clamped to
// [kProbabilityEpsilon, 1 - kProbabilityEpsilon]. y must be binary.
template <typename S>
ad::Var<S> weighted_bce(const ad::Var<S>& p, const ad::Tensor<S>& y, double beta = 5.0);

// The same loss from the vessel logit margin z = l_vessel - l_background
// (p = sigmoid(z)): mean(beta y softplus(-z) + (1 - y) softplus(z)). No
// clamping, so a saturated wrong prediction still has a gradient.
template <typename S>
ad::Var<S> weighted_bce_logits(const ad::Var<S>& z, const ad::Tensor<S>& y, double beta = 5.0);

// 1 - (2 y.p + eps) / (|y|_1 + |p|_1 + eps); both empty gives ~0.
template <typename S>
ad::Var<S> dice_loss(const ad::Var<S>& p, const ad::Tensor<S>& y);

// weighted_bce + dice_loss
template <typename S>
ad::Var<S> segmentation_loss(const ad::Var<S>& p, const ad::Tensor<S>& y, double beta = 5.0);

// weighted_bce_logits(z) + dice_loss(p); the training loss.
template <typename S>
ad::Var<S> segmentation_loss(const ad::Var<S>& z, const ad::Var<S>& p, const ad::Tensor<S>& y, double beta = 5.0);

}  // namespace vgseg::model
