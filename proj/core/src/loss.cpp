#include "stereo/loss.hpp"

#include <cmath>

namespace stereo {

template <typename T>
TensorPtr<T> sequence_loss(const CascadePredictions<T>& preds, const TensorPtr<T>& gt_full,
                           const TensorPtr<T>& valid_mask, double gamma) {
  if (gt_full->ndim() != 3 || gt_full->dim(0) != 1 || valid_mask->shape != gt_full->shape)
    throw InputError("sequence_loss: gt and mask must be matching 1 x H x W");
  int64_t valid = 0;
  for (int64_t i = 0; i < valid_mask->size(); ++i) {
    if (valid_mask->data[static_cast<size_t>(i)] > T(0.5)) {
      ++valid;
      if (!std::isfinite(static_cast<double>(gt_full->data[static_cast<size_t>(i)])))
        throw InputError("sequence_loss: non-finite ground truth inside the valid mask");
    }
  }
  if (valid == 0) throw InputError("sequence_loss: empty valid mask");
  const T inv_count = T(1) / static_cast<T>(valid);
  const int h = gt_full->dim(1), w = gt_full->dim(2);

  TensorPtr<T> total = Tensor<T>::scalar(T(0));
  for (const auto& [denom, fields] : preds.per_scale) {
    const int n = static_cast<int>(fields.size());
    for (int i = 1; i <= n; ++i) {
      const auto& f = fields[static_cast<size_t>(i - 1)];
      auto up = mul_scalar(bilinear_resize(f.values, h, w), static_cast<T>(f.scale_denom));
      auto err = mul(absolute(sub(gt_full, up)), valid_mask);
      auto term = mul_scalar(sum(err), inv_count);
      const T weight = static_cast<T>(std::pow(gamma, n - i));
      total = add(total, mul_scalar(term, weight));
    }
  }
  return total;
}

template TensorPtr<float> sequence_loss(const CascadePredictions<float>&,
                                        const TensorPtr<float>&, const TensorPtr<float>&,
                                        double);
template TensorPtr<double> sequence_loss(const CascadePredictions<double>&,
                                         const TensorPtr<double>&, const TensorPtr<double>&,
                                         double);

}  // namespace stereo
