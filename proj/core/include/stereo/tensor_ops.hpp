#pragma once

#include <vector>

#include "stereo/tensor.hpp"

namespace stereo {

// Differentiable primitives. Every op returns a fresh tensor; when grad
// recording is on and an input is tracked, the output carries a backward
// closure that accumulates adjoints into its inputs.

// -- elementwise --
template <typename T> TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> neg(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> add_scalar(const TensorPtr<T>& a, T s);
template <typename T> TensorPtr<T> mul_scalar(const TensorPtr<T>& a, T s);
template <typename T> TensorPtr<T> absolute(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> relu(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> sigmoid(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> tanh(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> elu(const TensorPtr<T>& a);

// -- shape --
template <typename T> TensorPtr<T> reshape(const TensorPtr<T>& a, Shape target);
template <typename T> TensorPtr<T> transpose(const TensorPtr<T>& a, const std::vector<int>& perm);
template <typename T> TensorPtr<T> concat(const std::vector<TensorPtr<T>>& parts, int axis);
template <typename T>
std::vector<TensorPtr<T>> split(const TensorPtr<T>& a, int axis, const std::vector<int>& sizes);

// -- linear algebra / reductions --
template <typename T> TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T> TensorPtr<T> softmax(const TensorPtr<T>& a, int axis);
template <typename T> TensorPtr<T> sum(const TensorPtr<T>& a);
template <typename T> TensorPtr<T> mean(const TensorPtr<T>& a);
// Divides each row of a (N x C) by the matching entry of denom (N x 1).
template <typename T> TensorPtr<T> div_rows(const TensorPtr<T>& a, const TensorPtr<T>& denom);

// -- spatial --
// x: C x H x W or N x C x H x W; w: O x C x kh x kw (odd kernel); b: O.
// Output spatial dims follow (H + 2*padding - kh) / stride + 1.
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    int stride = 1, int padding = 0);

// feat: C x H x W, coords: 2 x H' x W' in pixel units (x then y channel).
// Out-of-bounds taps contribute zero.
template <typename T>
TensorPtr<T> grid_sample_bilinear(const TensorPtr<T>& feat, const TensorPtr<T>& coords);

// Bilinear resize with edge-clamped taps; constants are preserved exactly.
template <typename T>
TensorPtr<T> bilinear_resize(const TensorPtr<T>& x, int out_h, int out_w);

// 2x2 mean pooling; spatial dims must be even.
template <typename T> TensorPtr<T> avgpool2(const TensorPtr<T>& x);

// values: 1 x H x W, weights: (9*factor^2) x H x W, already normalized over
// the 9 neighbor slots per output pixel. Each fine pixel is a convex blend of
// its (edge-clamped) 3x3 coarse neighborhood, scaled by the resolution factor.
template <typename T>
TensorPtr<T> convex_upsample(const TensorPtr<T>& values, const TensorPtr<T>& weights, int factor);

// Constant 2 x H x W grid holding pixel x coordinates in channel 0 and y in
// channel 1.
template <typename T> TensorPtr<T> coordinate_grid(int h, int w);

}  // namespace stereo
