#pragma once

#include <cstdint>

#include "stereo/tensor_ops.hpp"

namespace stereo {

// Matching-cost computation between two feature maps. Local volumes hold one
// channel block of D = 2r+1 correlation pairs per group; the window is a 1-D
// span along the scan-line or a k x k grid (k^2 = D) with a dilation step,
// optionally displaced per pair by learned offsets.

enum class CorrMode { OneD, TwoD };

enum class CorrSchedule { Alternate, OneDOnly, TwoDOnly };

// Alternation starts with the 2-D window on iteration 0.
CorrMode schedule_mode(CorrSchedule schedule, int iteration);

// f1, f2: C x H x W (f2 already resampled by the current disparity);
// offsets: 2 x D x H x W per-pair (dx, dy) displacements, or nullptr for the
// fixed window. Output: (groups * D) x H x W, dot products normalized by the
// channels per group. Out-of-bounds samples contribute zero.
template <typename T>
TensorPtr<T> local_correlation(const TensorPtr<T>& f1, const TensorPtr<T>& f2,
                               const TensorPtr<T>& offsets, CorrMode mode, int radius,
                               int dilation, int groups);

// Full cost volumes over every column (1-D) or every pixel (2-D)
// displacement; channel layout g*W + xr (1-D) or g*H*W + yr*W + xr (2-D).
// Forward-only; throws ResourceError when the volume would exceed
// budget_scalars.
template <typename T>
TensorPtr<T> allpairs_correlation_1d(const TensorPtr<T>& f1, const TensorPtr<T>& f2, int groups,
                                     int64_t budget_scalars = int64_t(1) << 27);
template <typename T>
TensorPtr<T> allpairs_correlation_2d(const TensorPtr<T>& f1, const TensorPtr<T>& f2, int groups,
                                     int64_t budget_scalars = int64_t(1) << 27);

// Windowed reads of a precomputed all-pairs volume around the current
// disparity; drop-in replacements for the local volume in the ablation
// suites. Forward-only.
template <typename T>
TensorPtr<T> allpairs_lookup_1d(const TensorPtr<T>& volume, const TensorPtr<T>& disp, int radius,
                                int groups);
template <typename T>
TensorPtr<T> allpairs_lookup_2d(const TensorPtr<T>& volume, const TensorPtr<T>& disp, int radius,
                                int dilation, int groups);

// Stored scalars per pixel, for the memory-accounting comparison.
int64_t local_volume_scalars_per_pixel(int radius, int groups);
int64_t allpairs_volume_scalars_per_pixel(CorrMode mode, int h, int w, int groups);

// Samples feat at (x - disp, y): the iterative resampling step that recenters
// the search window on the current estimate.
template <typename T>
TensorPtr<T> warp_by_disparity(const TensorPtr<T>& feat, const TensorPtr<T>& disp);

}  // namespace stereo
