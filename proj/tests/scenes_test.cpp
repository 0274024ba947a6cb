#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "stereo/image_io.hpp"
#include "stereo/scenes.hpp"
#include "support.hpp"

using namespace stereo;

namespace {

SceneConfig small_config(uint64_t seed) {
  SceneConfig cfg;
  cfg.height = 64;
  cfg.width = 96;
  cfg.min_layers = 2;
  cfg.max_layers = 5;
  cfg.disparity_min = 0.0;
  cfg.disparity_max = 18.0;
  cfg.seed = seed;
  return cfg;
}

// Exhaustive forward-mapping occlusion oracle: every pixel of every layer is
// splatted to its two right-view taps under a nearest-wins z-test over the
// composite order; a left-visible pixel is occluded when it loses at either
// tap or leaves the frame.
Image oracle_occlusion(const SceneConfig& cfg) {
  Rng rng(cfg.seed);
  const auto layers = sample_placements(cfg, rng);
  const int h = cfg.height, w = cfg.width;
  const int nl = static_cast<int>(layers.size());

  std::vector<int> top_left(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int j = nl - 1; j >= 0; --j)
        if (layers[static_cast<size_t>(j)].shape.contains(x, y)) {
          top_left[static_cast<size_t>(y) * w + x] = j;
          break;
        }

  std::vector<int> zbuf(static_cast<size_t>(h) * w, 0);  // background everywhere
  for (int j = 1; j < nl; ++j) {
    const auto& l = layers[static_cast<size_t>(j)];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!l.shape.contains(x, y)) continue;
        const double u = x - l.disparity_at(x, y);
        for (int k : {static_cast<int>(std::floor(u)), static_cast<int>(std::ceil(u))}) {
          if (k < 0 || k >= w) continue;
          auto& cell = zbuf[static_cast<size_t>(y) * w + k];
          cell = std::max(cell, j);
        }
      }
  }

  Image occ(1, h, w, 1.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int j = top_left[static_cast<size_t>(y) * w + x];
      const auto& l = layers[static_cast<size_t>(j)];
      const double u = x - l.disparity_at(x, y);
      bool visible = u >= 0.0 && u <= static_cast<double>(w - 1);
      if (visible) {
        for (int k : {static_cast<int>(std::floor(u)), static_cast<int>(std::ceil(u))})
          if (zbuf[static_cast<size_t>(y) * w + k] > j) visible = false;
      }
      occ.at(0, y, x) = visible ? 1.0f : 0.0f;
    }
  return occ;
}

}  // namespace

TEST_CASE("config validation") {
  SceneConfig cfg = small_config(0);
  cfg.disparity_min = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(0);
  cfg.disparity_max = cfg.width / 4.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(0);
  cfg.min_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("single full-frame layer with zero disparity is a trivial pair") {
  SceneConfig cfg = small_config(3);
  cfg.min_layers = 1;
  cfg.max_layers = 1;
  cfg.disparity_min = 0.0;
  cfg.disparity_max = 0.0;
  const ScenePair pair = generate_scene(cfg);
  for (float v : pair.disp.pix) CHECK(v == 0.0f);
  // With no displacement anywhere, the right view must reproduce the left.
  for (size_t i = 0; i < pair.left.pix.size(); ++i)
    CHECK(pair.right.pix[i] == doctest::Approx(pair.left.pix[i]).epsilon(1e-6));
  for (float v : pair.occ.pix) CHECK(v == 1.0f);
}

TEST_CASE("single full-frame layer at disparity 5 is a pure shift") {
  SceneConfig cfg = small_config(42);
  SceneLayer bg;
  bg.background = true;
  bg.shape.kind = ShapeKind::Ellipse;
  bg.shape.cx = cfg.width / 2.0;
  bg.shape.cy = cfg.height / 2.0;
  bg.shape.ext_x = bg.shape.ext_y = 1e6;
  bg.d0 = 5.0;
  bg.texture.kind = TextureKind::SharpNoise;
  bg.texture.noise_seed = 9;
  const ScenePair pair = render_scene(cfg, {bg});

  for (float v : pair.disp.pix) CHECK(v == 5.0f);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      // Occluded exactly on the 5-px frame margin, where the correspondence
      // leaves the image.
      CHECK(pair.occ.at(0, y, x) == (x >= 5 ? 1.0f : 0.0f));
      if (x >= 5)
        for (int c = 0; c < 3; ++c)
          CHECK(pair.right.at(c, y, x - 5) == doctest::Approx(pair.left.at(c, y, x)));
    }
}

TEST_CASE("degenerate disparity range pins every layer") {
  SceneConfig cfg = small_config(4);
  cfg.disparity_min = 6.0;
  cfg.disparity_max = 6.0;
  cfg.planar_fraction = 0.0;
  cfg.subpixel_fraction = 1.0;
  Rng rng(cfg.seed);
  for (const auto& layer : sample_placements(cfg, rng)) {
    if (layer.background) continue;
    CHECK(layer.d0 == doctest::Approx(6.0));
  }
}

TEST_CASE("placements come back sorted far to near") {
  SceneConfig cfg = small_config(5);
  cfg.min_layers = 6;
  cfg.max_layers = 8;
  Rng rng(cfg.seed);
  const auto layers = sample_placements(cfg, rng);
  CHECK(layers.front().background);
  for (size_t i = 2; i < layers.size(); ++i)
    CHECK(layers[i - 1].d0 <= layers[i].d0);
}

TEST_CASE("disparity draws are uniform (chi-squared, 8 bins)") {
  SceneConfig cfg = small_config(6);
  cfg.disparity_min = 0.0;
  cfg.disparity_max = 16.0;
  Rng rng(42);
  const int n = 10000, bins = 8;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const double d = sample_disparity(cfg, rng);
    CHECK(d >= cfg.disparity_min);
    CHECK(d < cfg.disparity_max + 1e-9);
    ++counts[std::min(bins - 1, static_cast<int>(d / 2.0))];
  }
  const double expected = static_cast<double>(n) / bins;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 18.475);  // chi-squared critical value, 7 dof, p = 0.01
}

TEST_CASE("generated disparity stays within the configured bounds") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const ScenePair pair = generate_scene(small_config(seed));
    float lo = 1e9f, hi = -1e9f;
    for (float v : pair.disp.pix) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 18.0f + 1e-4f);
  }
}

TEST_CASE("photometric consistency holds on every generated scene") {
  for (uint64_t seed = 0; seed < 12; ++seed) {
    const ScenePair pair = generate_scene(small_config(seed * 31 + 1));
    CHECK(photometric_inconsistency(pair) <= 2.0 / 255.0);
  }
}

TEST_CASE("occlusion mask equals the exhaustive forward-mapping oracle") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    SceneConfig cfg = small_config(seed * 17 + 3);
    const ScenePair pair = generate_scene(cfg);
    const Image want = oracle_occlusion(cfg);
    CHECK(pair.occ.pix == want.pix);
  }
}

TEST_CASE("two-layer occlusion geometry: near layer shadows the far one") {
  // Construct directly: background at d=2, one near square at d=10. Pixels of
  // the background within 8 px left of the square's right-view silhouette are
  // covered in the right image.
  SceneConfig cfg = small_config(99);
  const int w = cfg.width;
  SceneLayer bg;
  bg.background = true;
  bg.shape.kind = ShapeKind::Ellipse;
  bg.shape.cx = w / 2.0;
  bg.shape.cy = cfg.height / 2.0;
  bg.shape.ext_x = bg.shape.ext_y = 1e6;
  bg.d0 = 2.0;
  bg.texture.kind = TextureKind::Flat;

  SceneLayer front;
  front.shape.kind = ShapeKind::Ellipse;
  front.shape.cx = 48;
  front.shape.cy = 32;
  front.shape.ext_x = front.shape.ext_y = 10;
  front.d0 = 10.0;
  front.texture.kind = TextureKind::Flat;

  // Replicate the generator's rule by hand on one scan-line.
  const int y = 32;
  auto covered_by_front = [&](double k) {
    // front occupies x in [38, 58] on this row; right view shifts it by 10.
    return k >= 28.0 && k <= 48.0;
  };
  int occluded = 0, visible = 0;
  for (int x = 0; x < w; ++x) {
    if (front.shape.contains(x, y)) continue;  // background pixel in the left view
    const double u = x - bg.d0;
    if (u < 0 || u > w - 1) continue;
    const bool occ = covered_by_front(std::floor(u)) || covered_by_front(std::ceil(u));
    // Expected band: correspondences u in [28, 48] -> x in [30, 50], minus the
    // left-view front span [38, 58]: x in [30, 38).
    const bool expect = x >= 30 && x < 38;
    CHECK(occ == expect);
    occluded += occ ? 1 : 0;
    visible += occ ? 0 : 1;
  }
  CHECK(occluded == 8);  // exactly d_front - d_bg pixels on this row
  CHECK(visible > 0);
}

TEST_CASE("dataset_build writes a deterministic, resumable tree") {
  const auto dir = testing::scratch_dir("dataset");
  SceneConfig cfg = small_config(11);
  const auto manifest = dataset_build(cfg, 3, dir);
  CHECK(manifest.size() == 3);

  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++files;
  }
  CHECK(files == 13);  // 4 per scene + manifest

  // PFM round-trip: the stored ground truth equals the in-memory field.
  SceneConfig scfg = cfg;
  scfg.seed = cfg.seed + 1;
  const ScenePair scene1 = generate_scene(scfg);
  const Image back = read_pfm(dir + "/disp_000001.pfm");
  CHECK(back.pix == scene1.disp.pix);

  // Second run over the same tree reuses files and reproduces the manifest.
  auto mtime = std::filesystem::last_write_time(dir + "/left_000000.png");
  const auto manifest2 = dataset_build(cfg, 3, dir);
  CHECK(manifest2 == manifest);
  CHECK(std::filesystem::last_write_time(dir + "/left_000000.png") == mtime);

  CHECK_THROWS_AS(dataset_build(cfg, 0, dir), UsageError);
}

TEST_CASE("infeasible layers are rejected by the feasibility predicate") {
  SceneLayer layer;
  layer.shape.kind = ShapeKind::Ellipse;
  layer.shape.cx = 4;
  layer.shape.cy = 10;
  layer.shape.ext_x = layer.shape.ext_y = 2;
  layer.d0 = 30.0;  // footprint fully left of the frame after the shift
  CHECK_FALSE(layer_feasible(layer, 96));
  layer.d0 = 2.0;
  CHECK(layer_feasible(layer, 96));
}
