#include "stereo/augment.hpp"

#include <algorithm>
#include <cmath>

namespace stereo {

namespace {

constexpr int kResizeRetries = 50;

// Gaussian elimination with partial pivoting for the 8x8 homography system.
void solve_linear(double a[8][9]) {
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    for (int c = 0; c < 9; ++c) std::swap(a[col][c], a[pivot][c]);
    const double d = a[col][col];
    if (std::abs(d) < 1e-12) throw InputError("degenerate homography");
    for (int c = col; c < 9; ++c) a[col][c] /= d;
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
}

float sample_bilinear_zero(const Image& im, int c, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double tx = x - x0, ty = y - y0;
  double acc = 0.0;
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      const int xx = x0 + dx, yy = y0 + dy;
      if (xx < 0 || xx >= im.width || yy < 0 || yy >= im.height) continue;
      const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
      acc += w * im.at(c, yy, xx);
    }
  return static_cast<float>(acc);
}

}  // namespace

Homography homography_from_corner_shifts(int width, int height, const double dx[4],
                                         const double dy[4]) {
  const double xs[4] = {0, static_cast<double>(width - 1), 0, static_cast<double>(width - 1)};
  const double ys[4] = {0, 0, static_cast<double>(height - 1), static_cast<double>(height - 1)};
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = xs[i], y = ys[i];
    const double u = xs[i] + dx[i], v = ys[i] + dy[i];
    double* r1 = a[2 * i];
    double* r2 = a[2 * i + 1];
    r1[0] = x; r1[1] = y; r1[2] = 1; r1[6] = -u * x; r1[7] = -u * y; r1[8] = u;
    r2[3] = x; r2[4] = y; r2[5] = 1; r2[6] = -v * x; r2[7] = -v * y; r2[8] = v;
  }
  solve_linear(a);
  Homography h;
  for (int i = 0; i < 8; ++i) h.m[i] = a[i][8];
  h.m[8] = 1.0;
  return h;
}

Image warp_homography(const Image& im, const Homography& h, double extra_dy) {
  Image out(im.channels, im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const double w = h.m[6] * x + h.m[7] * y + h.m[8];
      const double sx = (h.m[0] * x + h.m[1] * y + h.m[2]) / w;
      const double sy = (h.m[3] * x + h.m[4] * y + h.m[5]) / w + extra_dy;
      for (int c = 0; c < im.channels; ++c) out.at(c, y, x) = sample_bilinear_zero(im, c, sx, sy);
    }
  return out;
}

Image shift_vertical(const Image& im, double dy) {
  Homography id;
  return warp_homography(im, id, dy);
}

Image gaussian_blur3(const Image& im) {
  static const double k[3] = {0.25, 0.5, 0.25};
  Image tmp(im.channels, im.height, im.width), out(im.channels, im.height, im.width);
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) {
        double acc = 0;
        for (int d = -1; d <= 1; ++d)
          acc += k[d + 1] * im.at(c, y, std::clamp(x + d, 0, im.width - 1));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) {
        double acc = 0;
        for (int d = -1; d <= 1; ++d)
          acc += k[d + 1] * tmp.at(c, std::clamp(y + d, 0, im.height - 1), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

Image resize_image_bilinear(const Image& im, int out_h, int out_w) {
  Image out(im.channels, out_h, out_w);
  const double sy = static_cast<double>(im.height) / out_h;
  const double sx = static_cast<double>(im.width) / out_w;
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, im.width - 1.0);
        const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, im.height - 1.0);
        out.at(c, y, x) = sample_bilinear_zero(im, c, src_x, src_y);
      }
  return out;
}

Image resize_image_nearest(const Image& im, int out_h, int out_w) {
  Image out(im.channels, out_h, out_w);
  const double sy = static_cast<double>(im.height) / out_h;
  const double sx = static_cast<double>(im.width) / out_w;
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, im.width - 1);
        const int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, im.height - 1);
        out.at(c, y, x) = im.at(c, src_y, src_x);
      }
  return out;
}

ScenePair chromatic_asymmetric(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                               nlohmann::json* log) {
  ScenePair out = pair;
  nlohmann::json rec;
  Image* images[2] = {&out.left, &out.right};
  const char* names[2] = {"left", "right"};
  for (int i = 0; i < 2; ++i) {
    const double brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
    const double contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
    const double gamma = rng.uniform(cfg.gamma_lo, cfg.gamma_hi);
    Image& im = *images[i];
    double mean = 0;
    for (float v : im.pix) mean += v;
    mean /= static_cast<double>(im.pix.size());
    for (auto& v : im.pix) {
      double p = v * brightness;
      p = (p - mean) * contrast + mean;
      p = std::pow(std::clamp(p, 0.0, 1.0), gamma);
      v = static_cast<float>(std::clamp(p, 0.0, 1.0));
    }
    rec[names[i]] = {{"brightness", brightness}, {"contrast", contrast}, {"gamma", gamma}};
  }
  if (log) (*log)["chromatic"] = rec;
  return out;
}

ScenePair spatial_right_perturb(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                                nlohmann::json* log) {
  ScenePair out = pair;
  double dx[4], dy[4];
  for (int i = 0; i < 4; ++i) {
    dx[i] = rng.uniform(-cfg.max_corner_shift, cfg.max_corner_shift);
    dy[i] = rng.uniform(-cfg.max_corner_shift, cfg.max_corner_shift);
  }
  const double vshift = rng.uniform(-cfg.max_vertical_shift, cfg.max_vertical_shift);
  const Homography h = homography_from_corner_shifts(pair.right.width, pair.right.height, dx, dy);
  out.right = warp_homography(pair.right, h, vshift);
  if (log)
    (*log)["spatial"] = {{"corner_dx", std::vector<double>(dx, dx + 4)},
                         {"corner_dy", std::vector<double>(dy, dy + 4)},
                         {"vertical_shift", vshift}};
  return out;
}

ScenePair rect_occlusion(const ScenePair& pair, Rng& rng, const AugmentConfig& cfg,
                         nlohmann::json* log) {
  ScenePair out = pair;
  Image& im = out.right;
  // Sides in [rect_min, rect_max] at full scale, shrunk proportionally for
  // frames under 100 px so the patch stays meaningful on small crops.
  const double k = std::min(1.0, std::min(im.height, im.width) / 100.0);
  const int sh = std::min(im.height, static_cast<int>(std::lround(rng.uniform(cfg.rect_min, cfg.rect_max) * k)));
  const int sw = std::min(im.width, static_cast<int>(std::lround(rng.uniform(cfg.rect_min, cfg.rect_max) * k)));
  const int y0 = rng.uniform_int(0, im.height - sh);
  const int x0 = rng.uniform_int(0, im.width - sw);
  float mean[3] = {0, 0, 0};
  for (int c = 0; c < im.channels; ++c) {
    double acc = 0;
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) acc += im.at(c, y, x);
    mean[c] = static_cast<float>(acc / (static_cast<double>(im.height) * im.width));
  }
  for (int c = 0; c < im.channels; ++c)
    for (int y = y0; y < y0 + sh; ++y)
      for (int x = x0; x < x0 + sw; ++x) im.at(c, y, x) = mean[c];
  if (log)
    (*log)["rect_occlusion"] = {{"x", x0}, {"y", y0}, {"w", sw}, {"h", sh}};
  return out;
}

ScenePair resize_crop(const ScenePair& pair, int target_h, int target_w, Rng& rng,
                      const AugmentConfig& cfg, nlohmann::json* log) {
  if (target_h % 16 != 0 || target_w % 16 != 0)
    throw InputError("resize_crop: target dims must be divisible by 16");
  const int h = pair.left.height, w = pair.left.width;
  double scale = 1.0;
  int sh = 0, sw = 0;
  bool ok = false;
  for (int attempt = 0; attempt < kResizeRetries && !ok; ++attempt) {
    scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    sh = static_cast<int>(std::lround(h * scale));
    sw = static_cast<int>(std::lround(w * scale));
    ok = sh >= target_h && sw >= target_w;
  }
  if (!ok) throw GenerationError("resize_crop: no feasible scale for target size");

  ScenePair out;
  out.manifest = pair.manifest;
  out.left = resize_image_bilinear(pair.left, sh, sw);
  out.right = resize_image_bilinear(pair.right, sh, sw);
  out.disp = resize_image_bilinear(pair.disp, sh, sw);
  const float dscale = static_cast<float>(sw) / static_cast<float>(w);
  for (auto& v : out.disp.pix) v *= dscale;  // disparity is a horizontal length
  out.occ = resize_image_nearest(pair.occ, sh, sw);

  const int y0 = rng.uniform_int(0, sh - target_h);
  const int x0 = rng.uniform_int(0, sw - target_w);
  auto crop = [&](const Image& src) {
    Image dst(src.channels, target_h, target_w);
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x) dst.at(c, y, x) = src.at(c, y0 + y, x0 + x);
    return dst;
  };
  out.left = crop(out.left);
  out.right = crop(out.right);
  out.disp = crop(out.disp);
  out.occ = crop(out.occ);
  if (log)
    (*log)["resize_crop"] = {{"scale", scale}, {"x", x0}, {"y", y0}};
  return out;
}

ScenePair augment_pair(const ScenePair& pair, uint64_t seed, const AugmentConfig& cfg,
                       nlohmann::json* log) {
  Rng rng(seed);
  ScenePair out = pair;
  if (!cfg.enabled) return out;
  if (rng.bernoulli(cfg.prob_chromatic)) out = chromatic_asymmetric(out, rng, cfg, log);
  if (rng.bernoulli(cfg.prob_spatial)) out = spatial_right_perturb(out, rng, cfg, log);
  if (rng.bernoulli(cfg.prob_occlusion)) out = rect_occlusion(out, rng, cfg, log);
  if (cfg.crop_height > 0 && cfg.crop_width > 0 && rng.bernoulli(cfg.prob_resize))
    out = resize_crop(out, cfg.crop_height, cfg.crop_width, rng, cfg, log);
  return out;
}

}  // namespace stereo
