#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stereo/image.hpp"
#include "stereo/rng.hpp"

namespace stereo {

// Procedural stereo pairs built from layered 2-D compositing. Every layer is
// an analytic shape mask plus an analytic texture plus a constant or planar
// disparity; the right image is rendered by warping each layer by its own
// disparity before compositing, so the returned ground truth and occlusion
// mask are exact by construction.
//
// Layers with fractional or planar disparity only receive low-curvature
// textures; hard textures (stripes, checkers, sharp noise) are paired with
// integer constant disparity. That keeps the left/right photometric
// consistency within the interpolation tolerance used by the tests.

enum class ShapeKind { Polygon, Ellipse, Bars, Wireframe, Perforated };
enum class TextureKind { Flat, Gradient, SmoothNoise, Sine, Stripes, Checker, SharpNoise, RgbNoise };
enum class DisparityDist { Uniform, Triangular };

struct SceneConfig {
  int height = 96;
  int width = 128;
  int min_layers = 3;  // foreground layers; a full-frame background is always added
  int max_layers = 6;
  double disparity_min = 0.0;
  double disparity_max = 24.0;
  DisparityDist distribution = DisparityDist::Uniform;
  bool compute_occlusion = true;
  double subpixel_fraction = 0.5;  // fraction of layers allowed fractional disparity
  double planar_fraction = 0.3;    // fraction of layers with planar (affine) disparity
  uint64_t seed = 0;

  void validate() const;
};

struct Texture {
  TextureKind kind = TextureKind::Flat;
  float color_a[3] = {0, 0, 0};
  float color_b[3] = {0, 0, 0};
  double angle = 0;      // pattern orientation
  double period = 24;    // wavelength / cell size
  double phase = 0;
  double grad_nx = 0, grad_ny = 0, grad_lo = 0, grad_span = 1;  // gradient plane
  uint64_t noise_seed = 0;

  double pattern(double x, double y) const;  // [0,1], analytic in x
  float eval(int ch, double x, double y) const {
    if (kind == TextureKind::RgbNoise)  // independent noise per channel
      return static_cast<float>(
          0.05 + 0.9 * hash_noise(static_cast<int64_t>(std::lround(x)),
                                  static_cast<int64_t>(std::lround(y)),
                                  noise_seed + static_cast<uint64_t>(ch)));
    const double p = pattern(x, y);
    return static_cast<float>(color_a[ch] + (color_b[ch] - color_a[ch]) * p);
  }
};

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Polygon;
  double cx = 0, cy = 0;
  double ext_x = 1, ext_y = 1;
  double angle = 0;
  std::vector<double> vertex_radius;  // polygon / wireframe
  double bar_gap = 8, bar_width = 2;
  double outline_width = 1.5;
  double hole_radius = 3, hole_spacing = 9;

  bool contains(double x, double y) const;
  // Conservative axis-aligned bounds in image coordinates.
  double bound_x_min() const;
  double bound_x_max() const;
  double bound_y_min() const;
  double bound_y_max() const;
};

struct SceneLayer {
  ShapeSpec shape;
  Texture texture;
  double d0 = 0;               // disparity at the shape center
  double slope_x = 0, slope_y = 0;  // planar disparity coefficients
  bool background = false;

  double disparity_at(double x, double y) const {
    return d0 + slope_x * (x - shape.cx) + slope_y * (y - shape.cy);
  }
};

struct ScenePair {
  Image left;   // 3 x H x W
  Image right;  // 3 x H x W
  Image disp;   // 1 x H x W, left-view disparity in pixels
  Image occ;    // 1 x H x W, 1 = visible in both views
  nlohmann::json manifest;
};

// One disparity draw from the configured distribution.
double sample_disparity(const SceneConfig& cfg, Rng& rng);

// Layer list sorted far-to-near (ascending disparity); background first.
std::vector<SceneLayer> sample_placements(const SceneConfig& cfg, Rng& rng);

// Deterministic rasterization of an explicit layer list (background first,
// far to near). generate_scene samples placements and renders them.
ScenePair render_scene(const SceneConfig& cfg, const std::vector<SceneLayer>& layers);

ScenePair generate_scene(const SceneConfig& cfg);

// Largest per-channel |left(x) - right(x - d(x))| over non-occluded pixels,
// sampling the right image bilinearly. The generator keeps this within
// 2/255.
double photometric_inconsistency(const ScenePair& pair);

// True when the layer's right-view footprint still intersects the frame.
bool layer_feasible(const SceneLayer& layer, int width);

// Writes left_%06d.png / right_%06d.png / disp_%06d.pfm / occ_%06d.png plus
// a JSON-lines manifest. Per-scene seed is cfg.seed + index; existing
// complete scenes are skipped, so interrupted runs can resume.
nlohmann::json dataset_build(const SceneConfig& cfg, int count, const std::string& out_dir);

}  // namespace stereo
