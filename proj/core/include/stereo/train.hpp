#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stereo/augment.hpp"
#include "stereo/checkpoint.hpp"
#include "stereo/loss.hpp"
#include "stereo/model.hpp"
#include "stereo/scenes.hpp"

namespace stereo {

struct TrainConfig {
  double base_lr = 4e-4;
  int warmup_iters = 100;
  int decay_start = 1200;
  int total_iters = 2000;
  int batch_size = 1;
  double gamma = 0.9;     // sequence-loss decay
  double grad_clip = 1.0; // global-norm bound, <= 0 disables
  bool mask_occluded = true;
  int val_every = 0;      // 0 = no periodic validation
  uint64_t seed = 0;

  void validate() const;
};

// Piecewise-linear schedule: 5% -> 100% of base over the warm-up, flat until
// decay_start, then 100% -> 5% by the final step.
double lr_at(int iter, const TrainConfig& cfg);

template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(ParamStore<T>& params, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);

  void step(double lr);
  // Scales gradients so their global norm stays within max_norm; returns the
  // pre-clip norm.
  double clip_global_norm(double max_norm);

  int64_t step_count() const { return t_; }
  void save_state(Checkpoint& ckpt) const;
  void restore_state(const Checkpoint& ckpt);

 private:
  ParamStore<T>* params_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct TrainResult {
  std::vector<double> losses;                 // one entry per optimizer step
  std::vector<std::pair<int, double>> val_epe;
  double final_val_epe = -1.0;
  Checkpoint checkpoint;                      // params + optimizer state + step
};

// Deterministic single-worker loop: given the same seed, data and config the
// loss sequence is bitwise identical. Aborts with NumericError when the loss
// stops being finite. When out_dir is non-empty, writes train_log.jsonl,
// aug_log.jsonl (when augmentation is on) and model.ckpt there.
TrainResult train_model(StereoModel<float>& model, const std::vector<ScenePair>& train_set,
                        const std::vector<ScenePair>& val_set, const TrainConfig& cfg,
                        const AugmentConfig& aug, const std::string& out_dir = "",
                        const Checkpoint* resume = nullptr);

// No-grad full-resolution inference on plain images.
Image infer_disparity(const StereoModel<float>& model, const Image& left, const Image& right,
                      int n_stages, const std::vector<int>& iters);

double mean_epe(const Image& pred, const Image& gt, const Image& mask);

// Reads a generated dataset directory via its manifest.jsonl.
std::vector<ScenePair> load_scene_dataset(const std::string& dir);

}  // namespace stereo
