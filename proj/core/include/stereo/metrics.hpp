#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stereo/image.hpp"

namespace stereo {

// Disparity error statistics over masked pixels. bad_* are percentages,
// a95 the 95th percentile of |err| (linear interpolation between order
// statistics), d1_all the outlier percentage (>3 px and >5% of |gt|).
struct EvalReport {
  double avg_err = 0;
  double bad_0_5 = 0;
  double bad_1 = 0;
  double bad_2 = 0;
  double rms = 0;
  double a95 = 0;
  double d1_all = 0;
  double epe = 0;
  int64_t pixel_count = 0;
  std::string mask_policy = "all";
};

EvalReport evaluate(const Image& pred, const Image& gt, const Image& mask);

// Pixel-count-weighted mean of per-image reports.
EvalReport aggregate_reports(const std::vector<EvalReport>& reports);

// Maximum IoU between fg_mask and {disparity > t}, sweeping t over all
// values where the thresholded mask can change. Returns (mxIoU, best t),
// taking the smallest t on ties.
std::pair<double, double> mxiou(const Image& disparity, const Image& fg_mask);

// mxIoU restricted to the band of pixels within Chebyshev distance p of the
// fg_mask boundary (dilation minus erosion with a (2p+1)^2 window).
double mxioubd(const Image& disparity, const Image& fg_mask, int p = 4);

// Band mask used by mxioubd, exposed for verification.
Image boundary_band(const Image& fg_mask, int p);

}  // namespace stereo
