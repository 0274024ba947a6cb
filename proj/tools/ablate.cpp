#include "ablate.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "stereo/metrics.hpp"
#include "stereo/train.hpp"

namespace stereo::tools {

namespace {

enum class CorrVariant { AllPairs1D, AllPairs2D, Local1D, Local2D, Local1D2D };

// Cascade inference with the correlation stage swapped out. All-pairs
// variants precompute the full volume per level and read a window around the
// current estimate each iteration; local variants run the regular adaptive
// window under the requested schedule.
Image infer_with_correlation(const StereoModel<float>& model, const ScenePair& pair,
                             CorrVariant variant, const std::vector<int>& iters) {
  NoGradGuard guard;
  const auto& cfg = model.config();
  const auto& update = model.update_block();
  auto left = tensor_from_image(pair.left);
  auto right = tensor_from_image(pair.right);
  auto pl = model.extract(left);
  auto pr = model.extract(right);

  TensorPtr<float> f1_16 = pl.levels[2], f2_16 = pr.levels[2];
  if (model.attention().layer_count() > 0) {
    auto attended =
        model.attention().apply(positional_encoding(f1_16), positional_encoding(f2_16));
    f1_16 = attended.first;
    f2_16 = attended.second;
  }

  TensorPtr<float> disp = Tensor<float>::zeros({1, f1_16->dim(1), f1_16->dim(2)});
  TensorPtr<float> up_weights;
  for (int k = 0; k < 3; ++k) {
    const int level = 2 - k;
    auto f1 = level == 2 ? f1_16 : pl.levels[static_cast<size_t>(level)];
    auto f2 = level == 2 ? f2_16 : pr.levels[static_cast<size_t>(level)];
    if (disp->dim(1) != f1->dim(1)) {
      const float ratio = static_cast<float>(f1->dim(2)) / static_cast<float>(disp->dim(2));
      disp = mul_scalar(bilinear_resize(disp, f1->dim(1), f1->dim(2)), ratio);
    }
    const int n = iters[static_cast<size_t>(k)];
    if (n == 0) continue;

    auto ctx = update.context(pl.levels[static_cast<size_t>(level)]);
    auto hidden = update.init_hidden(pl.levels[static_cast<size_t>(level)]);
    TensorPtr<float> volume;
    if (variant == CorrVariant::AllPairs1D)
      volume = allpairs_correlation_1d(f1, f2, cfg.corr_groups);
    else if (variant == CorrVariant::AllPairs2D)
      volume = allpairs_correlation_2d(f1, f2, cfg.corr_groups);

    for (int i = 0; i < n; ++i) {
      TensorPtr<float> corr;
      switch (variant) {
        case CorrVariant::AllPairs1D:
          corr = allpairs_lookup_1d(volume, disp, cfg.corr_radius, cfg.corr_groups);
          break;
        case CorrVariant::AllPairs2D:
          corr = allpairs_lookup_2d(volume, disp, cfg.corr_radius, cfg.corr_dilation,
                                    cfg.corr_groups);
          break;
        case CorrVariant::Local1D:
        case CorrVariant::Local2D:
        case CorrVariant::Local1D2D: {
          const CorrMode mode = variant == CorrVariant::Local1D   ? CorrMode::OneD
                                : variant == CorrVariant::Local2D ? CorrMode::TwoD
                                : schedule_mode(CorrSchedule::Alternate, i);
          auto off = update.offsets(hidden, ctx);
          auto f2r = warp_by_disparity(f2, disp);
          corr = local_correlation(f1, f2r, off, mode, cfg.corr_radius, cfg.corr_dilation,
                                   cfg.corr_groups);
          break;
        }
      }
      auto step = update.step(hidden, ctx, corr, disp);
      hidden = step.hidden;
      disp = add(disp, step.delta);
      if (level == 0 && i == n - 1) up_weights = step.up_weights;
    }
  }
  TensorPtr<float> full = up_weights
                              ? convex_upsample(disp, up_weights, 4)
                              : mul_scalar(bilinear_resize(disp, pair.left.height,
                                                           pair.left.width),
                                           4.0f);
  return image_from_tensor(full);
}

EvalReport eval_prediction(const Image& pred, const ScenePair& pair, const std::string& mask) {
  Image m = pair.occ;
  if (mask == "all") std::fill(m.pix.begin(), m.pix.end(), 1.0f);
  return evaluate(pred, pair.disp, m);
}

struct Row {
  std::string name;
  double epe = 0, bad2 = 0;
};

void write_csv(const std::string& path, const std::string& suite, const std::vector<Row>& rows,
               bool with_delta) {
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!path.empty()) {
    file.open(path);
    if (!file) throw IoError("cannot write " + path);
    out = &file;
  }
  *out << "suite,row,epe,bad2";
  if (with_delta) *out << ",delta_epe";
  *out << "\n";
  for (const auto& r : rows) {
    *out << suite << "," << r.name << "," << r.epe << "," << r.bad2;
    if (with_delta) *out << "," << (r.epe - rows[0].epe);
    *out << "\n";
  }
}

ScenePair disturb_pair(const ScenePair& pair, const std::string& kind, Rng& rng) {
  ScenePair out = pair;
  if (kind == "blur") {
    out.left = gaussian_blur3(pair.left);
    out.right = gaussian_blur3(pair.right);
  } else if (kind == "color") {
    for (auto* im : {&out.left, &out.right}) {
      const double b = rng.uniform(0.85, 1.15);
      for (auto& v : im->pix) v = static_cast<float>(std::clamp(v * b, 0.0, 1.0));
    }
  } else if (kind == "chromatic_noise") {
    for (auto& v : out.right.pix)
      v = static_cast<float>(std::clamp(v + rng.normal(0.0, 0.02), 0.0, 1.0));
  } else if (kind == "perspective") {
    double dx[4], dy[4];
    for (int i = 0; i < 4; ++i) {
      dx[i] = rng.uniform(-1.5, 1.5);
      dy[i] = rng.uniform(-1.5, 1.5);
    }
    const Homography h =
        homography_from_corner_shifts(pair.right.width, pair.right.height, dx, dy);
    out.right = warp_homography(pair.right, h);
  } else if (kind == "vertical_shift") {
    out.right = shift_vertical(pair.right, 1.0);
  } else if (kind == "spatial_distortion") {
    Image warped(pair.right.channels, pair.right.height, pair.right.width);
    const double phase = rng.uniform(0, 2 * M_PI);
    for (int c = 0; c < warped.channels; ++c)
      for (int y = 0; y < warped.height; ++y)
        for (int x = 0; x < warped.width; ++x) {
          const double sy = y + std::sin(2 * M_PI * x / 48.0 + phase);
          const int y0 = static_cast<int>(std::floor(sy));
          const double t = sy - y0;
          float v = 0;
          if (y0 >= 0 && y0 < warped.height) v += static_cast<float>((1 - t) * pair.right.at(c, y0, x));
          if (y0 + 1 >= 0 && y0 + 1 < warped.height)
            v += static_cast<float>(t * pair.right.at(c, y0 + 1, x));
          warped.at(c, y, x) = v;
        }
    out.right = warped;
  } else {
    throw UsageError("unknown disturbance: " + kind);
  }
  return out;
}

}  // namespace

int run_ablate(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& suite,
               const std::string& data_dir, const std::string& out_csv) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ModelConfig mcfg = cfg.model;
  if (ckpt.extra.contains("run_config"))
    mcfg = run_config_from_json(ckpt.extra.at("run_config")).model;
  StereoModel<float> model(mcfg, cfg.seed);
  restore_params(model.params(), ckpt);

  const auto scenes = load_scene_dataset(data_dir);
  const auto& iters = mcfg.iters_per_level;

  auto mean_over = [&](auto&& infer_fn) {
    std::vector<EvalReport> reports;
    for (const auto& pair : scenes)
      reports.push_back(eval_prediction(infer_fn(pair), pair, cfg.eval_mask));
    const auto agg = aggregate_reports(reports);
    return std::pair<double, double>{agg.epe, agg.bad_2};
  };

  std::vector<Row> rows;
  if (suite == "correlation") {
    const std::pair<std::string, CorrVariant> variants[] = {
        {"1d_allpairs", CorrVariant::AllPairs1D}, {"2d_allpairs", CorrVariant::AllPairs2D},
        {"1d_local", CorrVariant::Local1D},       {"2d_local", CorrVariant::Local2D},
        {"1d2d_local", CorrVariant::Local1D2D}};
    for (const auto& [name, variant] : variants) {
      auto [epe, bad2] = mean_over([&](const ScenePair& p) {
        return infer_with_correlation(model, p, variant, iters);
      });
      rows.push_back({name, epe, bad2});
    }
    write_csv(out_csv, suite, rows, false);
  } else if (suite == "cascades") {
    const int total = iters[0] + iters[1] + iters[2];
    const std::pair<std::string, std::vector<int>> grids[] = {
        {"1_level", {0, 0, total}},
        {"2_levels", {0, total / 2, total - total / 2}},
        {"3_levels", iters}};
    for (const auto& [name, grid] : grids) {
      auto [epe, bad2] = mean_over([&](const ScenePair& p) {
        return infer_disparity(model, p.left, p.right, 1, grid);
      });
      rows.push_back({name, epe, bad2});
    }
    write_csv(out_csv, suite, rows, false);
  } else if (suite == "stacked") {
    for (int stages = 1; stages <= 3; ++stages) {
      auto [epe, bad2] = mean_over([&](const ScenePair& p) {
        return infer_disparity(model, p.left, p.right, stages, iters);
      });
      rows.push_back({std::to_string(stages) + "_stages", epe, bad2});
    }
    write_csv(out_csv, suite, rows, false);
  } else if (suite == "disturb") {
    const char* kinds[] = {"clean",       "blur",           "color",
                           "chromatic_noise", "perspective", "vertical_shift",
                           "spatial_distortion"};
    int row_index = 0;
    for (const char* kind : kinds) {
      Rng rng(cfg.seed + static_cast<uint64_t>(row_index++));
      auto [epe, bad2] = mean_over([&](const ScenePair& p) {
        const ScenePair d = std::string(kind) == "clean" ? p : disturb_pair(p, kind, rng);
        return infer_disparity(model, d.left, d.right, 1, iters);
      });
      rows.push_back({kind, epe, bad2});
    }
    write_csv(out_csv, suite, rows, true);
  } else {
    throw UsageError("unknown suite: " + suite +
                     " (expected correlation | cascades | stacked | disturb)");
  }
  return 0;
}

}  // namespace stereo::tools
