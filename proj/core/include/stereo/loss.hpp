#pragma once

#include "stereo/model.hpp"

namespace stereo {

// Exponentially weighted multi-scale l1 over the refinement sequences: for
// each scale, prediction i of n carries weight gamma^(n-i) after being
// bilinearly resized to the ground-truth resolution with its values
// rescaled by the scale denominator. The norm is the mean absolute error
// over valid pixels, so the magnitude is resolution-independent.
template <typename T>
TensorPtr<T> sequence_loss(const CascadePredictions<T>& preds, const TensorPtr<T>& gt_full,
                           const TensorPtr<T>& valid_mask, double gamma);

}  // namespace stereo
