#include "stereo/config.hpp"

#include <fstream>
#include <set>

namespace stereo {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown config key: " + (where.empty() ? "" : where + ".") + it.key());
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void parse_model(const json& j, ModelConfig& m) {
  reject_unknown(j,
                 {"feat_channels", "hidden_channels", "context_channels", "corr_radius",
                  "corr_groups", "corr_dilation", "offset_bound", "attn_layers",
                  "iters_per_level", "corr_schedule"},
                 "model");
  get_to(j, "feat_channels", m.feat_channels);
  get_to(j, "hidden_channels", m.hidden_channels);
  get_to(j, "context_channels", m.context_channels);
  get_to(j, "corr_radius", m.corr_radius);
  get_to(j, "corr_groups", m.corr_groups);
  get_to(j, "corr_dilation", m.corr_dilation);
  get_to(j, "offset_bound", m.offset_bound);
  get_to(j, "attn_layers", m.attn_layers);
  get_to(j, "iters_per_level", m.iters_per_level);
  if (j.contains("corr_schedule")) {
    const auto s = j.at("corr_schedule").get<std::string>();
    if (s == "alternate")
      m.schedule = CorrSchedule::Alternate;
    else if (s == "1d")
      m.schedule = CorrSchedule::OneDOnly;
    else if (s == "2d")
      m.schedule = CorrSchedule::TwoDOnly;
    else
      throw ConfigError("model.corr_schedule must be alternate | 1d | 2d");
  }
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown(j,
                 {"base_lr", "warmup_iters", "decay_start", "total_iters", "batch_size", "gamma",
                  "grad_clip", "mask_occluded", "val_every", "seed"},
                 "train");
  get_to(j, "base_lr", t.base_lr);
  get_to(j, "warmup_iters", t.warmup_iters);
  get_to(j, "decay_start", t.decay_start);
  get_to(j, "total_iters", t.total_iters);
  get_to(j, "batch_size", t.batch_size);
  get_to(j, "gamma", t.gamma);
  get_to(j, "grad_clip", t.grad_clip);
  get_to(j, "mask_occluded", t.mask_occluded);
  get_to(j, "val_every", t.val_every);
  get_to(j, "seed", t.seed);
}

void parse_data(const json& j, SceneConfig& d) {
  reject_unknown(j,
                 {"height", "width", "min_layers", "max_layers", "disparity_min",
                  "disparity_max", "distribution", "compute_occlusion", "subpixel_fraction",
                  "planar_fraction", "seed"},
                 "data");
  get_to(j, "height", d.height);
  get_to(j, "width", d.width);
  get_to(j, "min_layers", d.min_layers);
  get_to(j, "max_layers", d.max_layers);
  get_to(j, "disparity_min", d.disparity_min);
  get_to(j, "disparity_max", d.disparity_max);
  get_to(j, "compute_occlusion", d.compute_occlusion);
  get_to(j, "subpixel_fraction", d.subpixel_fraction);
  get_to(j, "planar_fraction", d.planar_fraction);
  get_to(j, "seed", d.seed);
  if (j.contains("distribution")) {
    const auto s = j.at("distribution").get<std::string>();
    if (s == "uniform")
      d.distribution = DisparityDist::Uniform;
    else if (s == "triangular")
      d.distribution = DisparityDist::Triangular;
    else
      throw ConfigError("data.distribution must be uniform | triangular");
  }
}

void parse_augment(const json& j, AugmentConfig& a) {
  reject_unknown(j,
                 {"enabled", "brightness", "contrast", "gamma", "max_corner_shift",
                  "max_vertical_shift", "rect_min", "rect_max", "scale_range", "crop_height",
                  "crop_width", "prob_chromatic", "prob_spatial", "prob_occlusion",
                  "prob_resize"},
                 "augment");
  get_to(j, "enabled", a.enabled);
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError(std::string("augment.") + key + " must be [lo, hi]");
    lo = v[0];
    hi = v[1];
  };
  range("brightness", a.brightness_lo, a.brightness_hi);
  range("contrast", a.contrast_lo, a.contrast_hi);
  range("gamma", a.gamma_lo, a.gamma_hi);
  range("scale_range", a.scale_lo, a.scale_hi);
  get_to(j, "max_corner_shift", a.max_corner_shift);
  get_to(j, "max_vertical_shift", a.max_vertical_shift);
  get_to(j, "rect_min", a.rect_min);
  get_to(j, "rect_max", a.rect_max);
  get_to(j, "crop_height", a.crop_height);
  get_to(j, "crop_width", a.crop_width);
  get_to(j, "prob_chromatic", a.prob_chromatic);
  get_to(j, "prob_spatial", a.prob_spatial);
  get_to(j, "prob_occlusion", a.prob_occlusion);
  get_to(j, "prob_resize", a.prob_resize);
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  reject_unknown(
      j, {"seed", "model", "train", "data", "augment", "eval_mask", "dataset_dir", "val_dir",
          "out_dir"},
      "");
  get_to(j, "seed", cfg.seed);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  if (j.contains("augment")) parse_augment(j.at("augment"), cfg.augment);
  get_to(j, "eval_mask", cfg.eval_mask);
  get_to(j, "dataset_dir", cfg.dataset_dir);
  get_to(j, "val_dir", cfg.val_dir);
  get_to(j, "out_dir", cfg.out_dir);
  if (cfg.eval_mask != "noc" && cfg.eval_mask != "all")
    throw ConfigError("eval_mask must be noc | all");
  cfg.model.validate();
  return cfg;
}

RunConfig run_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  const char* schedule = cfg.model.schedule == CorrSchedule::Alternate ? "alternate"
                         : cfg.model.schedule == CorrSchedule::OneDOnly ? "1d"
                                                                        : "2d";
  const char* dist = cfg.data.distribution == DisparityDist::Uniform ? "uniform" : "triangular";
  return json{
      {"seed", cfg.seed},
      {"model",
       {{"feat_channels", cfg.model.feat_channels},
        {"hidden_channels", cfg.model.hidden_channels},
        {"context_channels", cfg.model.context_channels},
        {"corr_radius", cfg.model.corr_radius},
        {"corr_groups", cfg.model.corr_groups},
        {"corr_dilation", cfg.model.corr_dilation},
        {"offset_bound", cfg.model.offset_bound},
        {"attn_layers", cfg.model.attn_layers},
        {"iters_per_level", cfg.model.iters_per_level},
        {"corr_schedule", schedule}}},
      {"train",
       {{"base_lr", cfg.train.base_lr},
        {"warmup_iters", cfg.train.warmup_iters},
        {"decay_start", cfg.train.decay_start},
        {"total_iters", cfg.train.total_iters},
        {"batch_size", cfg.train.batch_size},
        {"gamma", cfg.train.gamma},
        {"grad_clip", cfg.train.grad_clip},
        {"mask_occluded", cfg.train.mask_occluded},
        {"val_every", cfg.train.val_every},
        {"seed", cfg.train.seed}}},
      {"data",
       {{"height", cfg.data.height},
        {"width", cfg.data.width},
        {"min_layers", cfg.data.min_layers},
        {"max_layers", cfg.data.max_layers},
        {"disparity_min", cfg.data.disparity_min},
        {"disparity_max", cfg.data.disparity_max},
        {"distribution", dist},
        {"compute_occlusion", cfg.data.compute_occlusion},
        {"subpixel_fraction", cfg.data.subpixel_fraction},
        {"planar_fraction", cfg.data.planar_fraction},
        {"seed", cfg.data.seed}}},
      {"augment",
       {{"enabled", cfg.augment.enabled},
        {"brightness", {cfg.augment.brightness_lo, cfg.augment.brightness_hi}},
        {"contrast", {cfg.augment.contrast_lo, cfg.augment.contrast_hi}},
        {"gamma", {cfg.augment.gamma_lo, cfg.augment.gamma_hi}},
        {"max_corner_shift", cfg.augment.max_corner_shift},
        {"max_vertical_shift", cfg.augment.max_vertical_shift},
        {"rect_min", cfg.augment.rect_min},
        {"rect_max", cfg.augment.rect_max},
        {"scale_range", {cfg.augment.scale_lo, cfg.augment.scale_hi}},
        {"crop_height", cfg.augment.crop_height},
        {"crop_width", cfg.augment.crop_width},
        {"prob_chromatic", cfg.augment.prob_chromatic},
        {"prob_spatial", cfg.augment.prob_spatial},
        {"prob_occlusion", cfg.augment.prob_occlusion},
        {"prob_resize", cfg.augment.prob_resize}}},
      {"eval_mask", cfg.eval_mask},
      {"dataset_dir", cfg.dataset_dir},
      {"val_dir", cfg.val_dir},
      {"out_dir", cfg.out_dir}};
}

}  // namespace stereo
