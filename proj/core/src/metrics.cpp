#include "stereo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace stereo {

namespace {

void check_single_channel(const Image& im, const char* what) {
  if (im.channels != 1) throw InputError(std::string(what) + " must have one channel");
}

double iou_counts(int64_t inter, int64_t a, int64_t b) {
  const int64_t uni = a + b - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

EvalReport evaluate(const Image& pred, const Image& gt, const Image& mask) {
  check_single_channel(pred, "pred");
  check_single_channel(gt, "gt");
  check_single_channel(mask, "mask");
  if (!pred.same_shape(gt) || !pred.same_shape(mask))
    throw InputError("evaluate: resolution mismatch");

  std::vector<double> errs;
  errs.reserve(pred.pix.size());
  int64_t n_bad05 = 0, n_bad1 = 0, n_bad2 = 0, n_d1 = 0;
  double sum = 0, sum_sq = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    if (mask.pix[static_cast<size_t>(i)] <= 0.5f) continue;
    const double e = std::abs(static_cast<double>(pred.pix[static_cast<size_t>(i)]) -
                              static_cast<double>(gt.pix[static_cast<size_t>(i)]));
    errs.push_back(e);
    sum += e;
    sum_sq += e * e;
    if (e > 0.5) ++n_bad05;
    if (e > 1.0) ++n_bad1;
    if (e > 2.0) ++n_bad2;
    if (e > 3.0 && e > 0.05 * std::abs(static_cast<double>(gt.pix[static_cast<size_t>(i)])))
      ++n_d1;
  }
  if (errs.empty()) throw InputError("evaluate: empty mask");

  EvalReport r;
  r.pixel_count = static_cast<int64_t>(errs.size());
  const double n = static_cast<double>(r.pixel_count);
  r.avg_err = sum / n;
  r.epe = r.avg_err;
  r.rms = std::sqrt(sum_sq / n);
  r.bad_0_5 = 100.0 * static_cast<double>(n_bad05) / n;
  r.bad_1 = 100.0 * static_cast<double>(n_bad1) / n;
  r.bad_2 = 100.0 * static_cast<double>(n_bad2) / n;
  r.d1_all = 100.0 * static_cast<double>(n_d1) / n;

  std::sort(errs.begin(), errs.end());
  if (errs.size() == 1) {
    r.a95 = errs[0];
  } else {
    const double pos = 0.95 * (n - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const double w = pos - static_cast<double>(lo);
    r.a95 = errs[lo] * (1.0 - w) + errs[std::min(lo + 1, errs.size() - 1)] * w;
  }
  return r;
}

EvalReport aggregate_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw InputError("aggregate_reports: no reports");
  EvalReport agg;
  agg.mask_policy = reports[0].mask_policy;
  double total = 0;
  for (const auto& r : reports) total += static_cast<double>(r.pixel_count);
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.pixel_count) / total;
    agg.avg_err += w * r.avg_err;
    agg.epe += w * r.epe;
    agg.rms += w * r.rms;
    agg.a95 += w * r.a95;
    agg.bad_0_5 += w * r.bad_0_5;
    agg.bad_1 += w * r.bad_1;
    agg.bad_2 += w * r.bad_2;
    agg.d1_all += w * r.d1_all;
    agg.pixel_count += r.pixel_count;
  }
  return agg;
}

std::pair<double, double> mxiou(const Image& disparity, const Image& fg_mask) {
  check_single_channel(disparity, "disparity");
  check_single_channel(fg_mask, "fg_mask");
  if (!disparity.same_shape(fg_mask)) throw InputError("mxiou: resolution mismatch");

  const int64_t n = disparity.size();
  int64_t fg_count = 0;
  for (int64_t i = 0; i < n; ++i)
    if (fg_mask.pix[static_cast<size_t>(i)] > 0.5f) ++fg_count;
  if (fg_count == 0 || fg_count == n)
    throw InputError("mxiou: foreground mask is degenerate");

  // Group pixels by disparity value, descending. Walking values from high to
  // low grows {disp > t} incrementally; candidates are each unique value plus
  // one below the minimum (the all-pixels mask).
  std::map<float, std::pair<int64_t, int64_t>, std::greater<float>> buckets;  // value -> (count, fg count)
  for (int64_t i = 0; i < n; ++i) {
    auto& b = buckets[disparity.pix[static_cast<size_t>(i)]];
    ++b.first;
    if (fg_mask.pix[static_cast<size_t>(i)] > 0.5f) ++b.second;
  }

  double best_iou = -1.0, best_t = 0.0;
  int64_t m_count = 0, m_inter = 0;
  for (const auto& [value, counts] : buckets) {
    // Threshold exactly at this value: mask = strictly greater pixels.
    const double iou = iou_counts(m_inter, m_count, fg_count);
    if (iou > best_iou || (iou == best_iou && value < best_t)) {
      best_iou = iou;
      best_t = value;
    }
    m_count += counts.first;
    m_inter += counts.second;
  }
  // Below the minimum the mask covers everything.
  const double t_all = static_cast<double>(buckets.rbegin()->first) - 1.0;
  const double iou_all = iou_counts(m_inter, m_count, fg_count);
  if (iou_all > best_iou || (iou_all == best_iou && t_all < best_t)) {
    best_iou = iou_all;
    best_t = t_all;
  }
  return {best_iou, best_t};
}

Image boundary_band(const Image& fg_mask, int p) {
  check_single_channel(fg_mask, "fg_mask");
  const int h = fg_mask.height, w = fg_mask.width;
  // Separable Chebyshev dilation / erosion: max / min over a (2p+1) window,
  // rows then columns.
  auto window_pass = [&](const std::vector<float>& src, bool maximum) {
    std::vector<float> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float v = src[static_cast<size_t>(y) * w + x];
        for (int d = -p; d <= p; ++d) {
          const int xx = x + d;
          if (xx < 0 || xx >= w) continue;
          const float s = src[static_cast<size_t>(y) * w + xx];
          v = maximum ? std::max(v, s) : std::min(v, s);
        }
        tmp[static_cast<size_t>(y) * w + x] = v;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float v = tmp[static_cast<size_t>(y) * w + x];
        for (int d = -p; d <= p; ++d) {
          const int yy = y + d;
          if (yy < 0 || yy >= h) continue;
          const float s = tmp[static_cast<size_t>(yy) * w + x];
          v = maximum ? std::max(v, s) : std::min(v, s);
        }
        out[static_cast<size_t>(y) * w + x] = v;
      }
    return out;
  };
  const auto dil = window_pass(fg_mask.pix, true);
  const auto ero = window_pass(fg_mask.pix, false);
  Image band(1, h, w);
  for (size_t i = 0; i < band.pix.size(); ++i)
    band.pix[i] = (dil[i] > 0.5f && ero[i] <= 0.5f) ? 1.0f : 0.0f;
  return band;
}

double mxioubd(const Image& disparity, const Image& fg_mask, int p) {
  if (p < 1) throw InputError("mxioubd: p must be >= 1");
  const Image band = boundary_band(fg_mask, p);
  int64_t band_count = 0;
  for (float v : band.pix)
    if (v > 0.5f) ++band_count;
  if (band_count == 0) throw InputError("mxioubd: empty boundary band");

  // Restrict both maps to the band and run the same sweep.
  Image disp_band(1, 1, static_cast<int>(band_count));
  Image fg_band(1, 1, static_cast<int>(band_count));
  int64_t j = 0;
  for (int64_t i = 0; i < band.size(); ++i)
    if (band.pix[static_cast<size_t>(i)] > 0.5f) {
      disp_band.pix[static_cast<size_t>(j)] = disparity.pix[static_cast<size_t>(i)];
      fg_band.pix[static_cast<size_t>(j)] = fg_mask.pix[static_cast<size_t>(i)];
      ++j;
    }
  return mxiou(disp_band, fg_band).first;
}

}  // namespace stereo
