#pragma once

#include <array>
#include <utility>
#include <vector>

#include "stereo/params.hpp"
#include "stereo/tensor_ops.hpp"

namespace stereo {

// Per-image feature maps at 1/4, 1/8 and 1/16 of the input resolution.
template <typename T>
struct FeaturePyramid {
  std::array<TensorPtr<T>, 3> levels;  // [0] 1/4, [1] 1/8, [2] 1/16

  static int denom_of(int level) { return 4 << level; }
};

template <typename T>
struct ConvParams {
  TensorPtr<T> w, b;
};

// Residual encoder: a stride-2 stem then three stride-2 stages, each tapped
// through a 1x1 projection to the shared channel width. Both images run
// through the same instance, so weight sharing holds by construction.
template <typename T>
class PyramidEncoder {
 public:
  PyramidEncoder(ParamStore<T>& params, Rng& rng, int out_channels);

  // image: 3 x H x W with H, W divisible by 16.
  FeaturePyramid<T> extract(const TensorPtr<T>& image) const;

  int out_channels() const { return out_channels_; }

 private:
  struct Stage {
    ConvParams<T> down, res1, res2, out;
  };
  int out_channels_;
  ConvParams<T> stem_;
  std::array<Stage, 3> stages_;
};

// Adds a fixed 2-D sinusoidal position signal; output shape equals input.
template <typename T>
TensorPtr<T> positional_encoding(const TensorPtr<T>& feat);

// Kernelized attention over token matrices (N x C), linear in N via the
// elu(x)+1 feature map. q/k/v are already projected.
template <typename T>
TensorPtr<T> linear_attention_tokens(const TensorPtr<T>& q, const TensorPtr<T>& k,
                                     const TensorPtr<T>& v);

// Alternating self / cross attention rounds applied to the coarsest pyramid
// level of both images; even rounds attend within each map, odd rounds
// across. Both maps share one weight set.
template <typename T>
class AttentionStack {
 public:
  AttentionStack(ParamStore<T>& params, Rng& rng, int channels, int n_layers);

  std::pair<TensorPtr<T>, TensorPtr<T>> apply(const TensorPtr<T>& a,
                                              const TensorPtr<T>& b) const;

  int layer_count() const { return static_cast<int>(layers_.size()); }

 private:
  struct Layer {
    TensorPtr<T> wq, wk, wv, wm;
  };
  TensorPtr<T> attend(const TensorPtr<T>& q_tokens, const TensorPtr<T>& kv_tokens,
                      const Layer& l) const;
  std::vector<Layer> layers_;
};

}  // namespace stereo
