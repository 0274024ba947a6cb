#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "ablate.hpp"
#include "stereo/config.hpp"
#include "stereo/image_io.hpp"
#include "stereo/metrics.hpp"
#include "stereo/train.hpp"

namespace fs = std::filesystem;
using namespace stereo;

namespace {

RunConfig load_config(const std::string& path) {
  if (!path.empty()) return run_config_from_file(path);
  if (const char* env = std::getenv("STEREOMATCH_CONFIG"); env && *env)
    return run_config_from_file(env);
  return default_run_config();
}

int cmd_gen_data(const std::string& config_path, int count, const std::string& out_dir,
                 int64_t seed_override) {
  if (count < 1) throw UsageError("gen-data: --count must be >= 1");
  RunConfig cfg = load_config(config_path);
  if (seed_override >= 0) cfg.data.seed = static_cast<uint64_t>(seed_override);
  const std::string dir = out_dir.empty() ? cfg.dataset_dir : out_dir;
  if (dir.empty()) throw UsageError("gen-data: no output directory configured");
  dataset_build(cfg.data, count, dir);
  std::cout << dir << "/manifest.jsonl\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume_path) {
  RunConfig cfg = load_config(config_path);
  if (cfg.dataset_dir.empty()) throw UsageError("train: dataset_dir missing from config");
  auto train_set = load_scene_dataset(cfg.dataset_dir);
  std::vector<ScenePair> val_set;
  if (!cfg.val_dir.empty()) val_set = load_scene_dataset(cfg.val_dir);

  StereoModel<float> model(cfg.model, cfg.seed);
  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    resume_ptr = &resume;
  }
  TrainResult result =
      train_model(model, train_set, val_set, cfg.train, cfg.augment, cfg.out_dir, resume_ptr);

  // Stamp the run config into the checkpoint so inference can rebuild the model.
  result.checkpoint.extra["run_config"] = run_config_to_json(cfg);
  save_checkpoint(cfg.out_dir + "/model.ckpt", result.checkpoint);
  std::cout << cfg.out_dir << "/model.ckpt\n";
  if (result.final_val_epe >= 0)
    std::cout << "final val epe: " << result.final_val_epe << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& left_path,
              const std::string& right_path, int stages, const std::string& out_path,
              const std::string& viz_path, std::vector<int> iters_flag) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ModelConfig mcfg;
  uint64_t seed = 0;
  if (ckpt.extra.contains("run_config")) {
    RunConfig rc = run_config_from_json(ckpt.extra.at("run_config"));
    mcfg = rc.model;
    seed = rc.seed;
  }
  StereoModel<float> model(mcfg, seed);
  restore_params(model.params(), ckpt);

  const Image left = read_png(left_path);
  const Image right = read_png(right_path);
  if (!left.same_shape(right)) throw InputError("infer: image sizes differ");

  const std::vector<int> iters =
      iters_flag.empty() ? model.config().iters_per_level : iters_flag;
  const Image disp = infer_disparity(model, left, right, stages, iters);
  write_pfm(out_path, disp);
  if (!viz_path.empty()) {
    float lo = disp.pix[0], hi = disp.pix[0];
    for (float v : disp.pix) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    write_png(viz_path, colorize_disparity(disp, lo, hi));
  }
  std::cout << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& mask,
             const std::string& out_path, const std::string& csv_path) {
  if (mask != "noc" && mask != "all") throw UsageError("eval: --mask must be noc | all");

  // Pair up indices found in the ground-truth directory.
  std::vector<int> indices;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    const std::string name = entry.path().filename().string();
    int idx;
    if (std::sscanf(name.c_str(), "disp_%d.pfm", &idx) == 1) indices.push_back(idx);
  }
  std::sort(indices.begin(), indices.end());
  if (indices.empty()) throw InputError("eval: no disp_*.pfm files in " + gt_dir);

  std::vector<int> missing;
  char name[64];
  std::vector<EvalReport> reports;
  nlohmann::json lines = nlohmann::json::array();
  for (int idx : indices) {
    std::snprintf(name, sizeof(name), "disp_%06d.pfm", idx);
    const std::string pred_path = pred_dir + "/" + name;
    if (!fs::exists(pred_path)) {
      missing.push_back(idx);
      continue;
    }
    const Image pred = read_pfm(pred_path);
    const Image gt = read_pfm(gt_dir + "/" + name);
    Image m(1, gt.height, gt.width, 1.0f);
    if (mask == "noc") {
      std::snprintf(name, sizeof(name), "occ_%06d.png", idx);
      m = read_png(gt_dir + "/" + name);
      for (auto& v : m.pix) v = v > 0.5f ? 1.0f : 0.0f;
    }
    EvalReport r = evaluate(pred, gt, m);
    r.mask_policy = mask;
    reports.push_back(r);
    lines.push_back({{"index", idx},
                     {"avg_err", r.avg_err},
                     {"bad_0_5", r.bad_0_5},
                     {"bad_1", r.bad_1},
                     {"bad_2", r.bad_2},
                     {"rms", r.rms},
                     {"a95", r.a95},
                     {"d1_all", r.d1_all},
                     {"epe", r.epe},
                     {"pixels", r.pixel_count}});
  }
  if (!missing.empty()) {
    std::string list;
    for (int idx : missing) list += (list.empty() ? "" : ", ") + std::to_string(idx);
    throw InputError("eval: missing predictions for indices: " + list);
  }

  const EvalReport agg = aggregate_reports(reports);
  nlohmann::json agg_line{{"aggregate", true},
                          {"avg_err", agg.avg_err},
                          {"bad_0_5", agg.bad_0_5},
                          {"bad_1", agg.bad_1},
                          {"bad_2", agg.bad_2},
                          {"rms", agg.rms},
                          {"a95", agg.a95},
                          {"d1_all", agg.d1_all},
                          {"epe", agg.epe},
                          {"pixels", agg.pixel_count},
                          {"mask", mask}};

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw IoError("cannot write " + out_path);
    out = &file;
  }
  for (const auto& line : lines) *out << line.dump() << "\n";
  *out << agg_line.dump() << "\n";

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << "index,avg_err,bad_0_5,bad_1,bad_2,rms,a95,d1_all,pixels\n";
    for (size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      csv << indices[i] << "," << r.avg_err << "," << r.bad_0_5 << "," << r.bad_1 << ","
          << r.bad_2 << "," << r.rms << "," << r.a95 << "," << r.d1_all << "," << r.pixel_count
          << "\n";
    }
    csv << "aggregate," << agg.avg_err << "," << agg.bad_0_5 << "," << agg.bad_1 << ","
        << agg.bad_2 << "," << agg.rms << "," << agg.a95 << "," << agg.d1_all << ","
        << agg.pixel_count << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo matching toolkit: data generation, training, inference, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume_path;
  int count = 0;
  int64_t seed_override = -1;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic stereo dataset");
  gen->add_option("--config", config_path, "run config JSON");
  gen->add_option("--count", count, "number of scenes")->required();
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--seed", seed_override, "override data seed");

  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  std::string ckpt_path, left_path, right_path, out_path = "disp.pfm", viz_path;
  int stages = 1;
  std::vector<int> iters_flag;
  auto* infer = app.add_subcommand("infer", "predict disparity for one pair");
  infer->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  infer->add_option("--left", left_path, "left image PNG")->required();
  infer->add_option("--right", right_path, "right image PNG")->required();
  infer->add_option("--stages", stages, "inference stages (1-3)");
  infer->add_option("--out", out_path, "output PFM path");
  infer->add_option("--viz", viz_path, "optional color-mapped PNG");
  infer->add_option("--iters", iters_flag, "iterations per level, coarse to fine")
      ->delimiter(',');

  std::string pred_dir, gt_dir, mask = "noc", report_path, csv_path;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", pred_dir, "directory of disp_*.pfm predictions")->required();
  eval->add_option("--gt", gt_dir, "dataset directory with ground truth")->required();
  eval->add_option("--mask", mask, "noc | all");
  eval->add_option("--out", report_path, "JSON-lines report path (default stdout)");
  eval->add_option("--csv", csv_path, "optional CSV export");

  std::string suite, data_dir, ablate_csv;
  auto* ablate = app.add_subcommand("ablate", "comparison grids on a held-out set");
  ablate->add_option("--config", config_path, "run config JSON");
  ablate->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  ablate->add_option("--suite", suite, "correlation | cascades | stacked | disturb")->required();
  ablate->add_option("--data", data_dir, "held-out dataset directory")->required();
  ablate->add_option("--out", ablate_csv, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, count, out_dir, seed_override);
    if (train->parsed()) return cmd_train(config_path, resume_path);
    if (infer->parsed())
      return cmd_infer(ckpt_path, left_path, right_path, stages, out_path, viz_path, iters_flag);
    if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, mask, report_path, csv_path);
    if (ablate->parsed()) {
      RunConfig cfg = load_config(config_path);
      return stereo::tools::run_ablate(cfg, ckpt_path, suite, data_dir, ablate_csv);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
