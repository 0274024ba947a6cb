#pragma once

#include <map>
#include <vector>

#include "stereo/correlation.hpp"
#include "stereo/feature_pyramid.hpp"
#include "stereo/params.hpp"

namespace stereo {

// Horizontal displacement map tagged with its pyramid scale. Values are in
// pixels at the field's own resolution; rescaling between levels multiplies
// them by the spatial ratio.
template <typename T>
struct DisparityField {
  TensorPtr<T> values;  // 1 x H x W
  int scale_denom = 1;  // 16, 8, 4 or 1
};

struct ModelConfig {
  int feat_channels = 64;
  int hidden_channels = 64;
  int context_channels = 64;
  int corr_radius = 4;
  int corr_groups = 4;
  int corr_dilation = 1;
  double offset_bound = 2.0;  // learned window displacement bound, px
  int attn_layers = 2;
  std::vector<int> iters_per_level = {4, 4, 4};  // coarse (1/16) to fine (1/4)
  CorrSchedule schedule = CorrSchedule::Alternate;

  int corr_pairs() const { return 2 * corr_radius + 1; }
  void validate() const;
};

// One refinement pass over a pyramid level; all levels and stacked stages
// share this single set of weights.
template <typename T>
class UpdateBlock {
 public:
  UpdateBlock(ParamStore<T>& params, Rng& rng, const ModelConfig& cfg);

  TensorPtr<T> context(const TensorPtr<T>& feat) const;
  TensorPtr<T> init_hidden(const TensorPtr<T>& feat) const;

  // Content-adaptive window displacements, bounded by offset_bound via tanh.
  TensorPtr<T> offsets(const TensorPtr<T>& hidden, const TensorPtr<T>& ctx) const;

  struct StepOut {
    TensorPtr<T> hidden;      // tanh-bounded state, values in (-1, 1)
    TensorPtr<T> delta;       // 1 x H x W disparity increment
    TensorPtr<T> up_weights;  // (9*16) x H x W, softmax over the 9 neighbors
  };
  StepOut step(const TensorPtr<T>& hidden, const TensorPtr<T>& ctx, const TensorPtr<T>& corr,
               const TensorPtr<T>& disp) const;

 private:
  const ModelConfig cfg_;
  ConvParams<T> ctx_conv_, hid_conv_;
  ConvParams<T> motion_, gate_z_, gate_r_, cand_h_, cand_x_;
  ConvParams<T> delta1_, delta2_, up_, off1_, off2_;
};

// Refinement sequences per scale plus the final full-resolution field.
template <typename T>
struct CascadePredictions {
  std::map<int, std::vector<DisparityField<T>>> per_scale;  // keyed by scale denom
  DisparityField<T> full_res;

  int prediction_count() const {
    int n = 0;
    for (const auto& [denom, preds] : per_scale) n += static_cast<int>(preds.size());
    return n;
  }
};

template <typename T>
class StereoModel {
 public:
  StereoModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const PyramidEncoder<T>& encoder() const { return encoder_; }
  const UpdateBlock<T>& update_block() const { return update_; }
  const AttentionStack<T>& attention() const { return attention_; }

  FeaturePyramid<T> extract(const TensorPtr<T>& image) const { return encoder_.extract(image); }

  // Recurrent chain at one level: resample f2 by the current estimate,
  // correlate under the alternation schedule, update. Returns every
  // intermediate prediction; up_weights_out receives the last step's
  // upsampling weights when non-null.
  std::vector<DisparityField<T>> run_level(const TensorPtr<T>& f1, const TensorPtr<T>& f2,
                                           const TensorPtr<T>& ctx_feat,
                                           DisparityField<T> disp, int n_iters,
                                           TensorPtr<T>* up_weights_out = nullptr) const;

  // Coarse-to-fine refinement over the three pyramid levels. The 1/16 level
  // starts from zeros; each finer level starts from the upsampled,
  // value-doubled previous output. Levels with zero iterations pass their
  // initialization through.
  CascadePredictions<T> cascade_forward(const TensorPtr<T>& left, const TensorPtr<T>& right,
                                        const std::vector<int>& iters) const;

  // Image-pyramid inference: the coarsest stage runs the full cascade, each
  // finer stage runs only the final-level chain initialized from the
  // previous stage's rescaled output.
  DisparityField<T> stacked_inference(const TensorPtr<T>& left, const TensorPtr<T>& right,
                                      int n_stages, const std::vector<int>& iters) const;

 private:
  ModelConfig cfg_;
  Rng init_rng_;  // drives every initializer; declared before the submodules
  ParamStore<T> params_;
  PyramidEncoder<T> encoder_;
  AttentionStack<T> attention_;
  UpdateBlock<T> update_;
};

}  // namespace stereo
