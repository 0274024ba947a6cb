#pragma once

#include <cstdint>

#include <json.hpp>

#include "stereo/rng.hpp"
#include "stereo/scenes.hpp"

namespace stereo {

// Training-time augmentation imitating camera-module inconsistency and
// imperfect rectification. All draws come from the passed Rng, so a pipeline
// is reproducible from its seed; applied parameters can be appended to a
// JSON log for the run record.
struct AugmentConfig {
  bool enabled = true;
  double brightness_lo = 0.6, brightness_hi = 1.4;
  double contrast_lo = 0.6, contrast_hi = 1.4;
  double gamma_lo = 0.7, gamma_hi = 1.5;
  double max_corner_shift = 2.0;    // homography corner displacement bound, px
  double max_vertical_shift = 2.0;  // right-image vertical shift, strictly below
  double rect_min = 50, rect_max = 100;  // occlusion rectangle sides at full scale
  double scale_lo = 0.5, scale_hi = 2.0;
  int crop_height = 0, crop_width = 0;  // resize_crop target; 0 disables the stage
  double prob_chromatic = 1.0, prob_spatial = 1.0, prob_occlusion = 1.0, prob_resize = 1.0;
};

// Independent brightness / contrast / gamma per image; ground truth unchanged.
ScenePair chromatic_asymmetric(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                               nlohmann::json* log = nullptr);

// Right image only: small random homography plus sub-2px vertical shift.
// The ground truth is deliberately left untouched; the residual warp is the
// robustness signal the model trains against.
ScenePair spatial_right_perturb(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                                nlohmann::json* log = nullptr);

// One mean-color rectangle pasted into the right image. Side lengths scale
// down proportionally when the frame is smaller than 100 px.
ScenePair rect_occlusion(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                         nlohmann::json* log = nullptr);

// Isotropic rescale (disparity values follow the horizontal factor) then a
// random crop to the target size.
ScenePair resize_crop(const ScenePair& pair, int target_h, int target_w, Rng& rng,
                      const AugmentConfig& cfg, nlohmann::json* log = nullptr);

// Fixed composition: chromatic -> spatial -> occlusion -> resize_crop, each
// gated by its configured probability.
ScenePair augment_pair(const ScenePair& pair, uint64_t seed, const AugmentConfig& cfg,
                       nlohmann::json* log = nullptr);

// Warp helpers, also used by the evaluation disturbance suites.
struct Homography {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, maps (x, y, 1)
};

Homography homography_from_corner_shifts(int width, int height, const double dx[4],
                                         const double dy[4]);
Image warp_homography(const Image& im, const Homography& h, double extra_dy = 0.0);
Image shift_vertical(const Image& im, double dy);
Image gaussian_blur3(const Image& im);
Image resize_image_bilinear(const Image& im, int out_h, int out_w);
Image resize_image_nearest(const Image& im, int out_h, int out_w);

}  // namespace stereo
