#pragma once

#include <string>

#include <json.hpp>

#include "stereo/augment.hpp"
#include "stereo/model.hpp"
#include "stereo/scenes.hpp"
#include "stereo/train.hpp"

namespace stereo {

// One declarative document driving every command; unknown keys are rejected
// so a config cannot silently drift from the schema.
struct RunConfig {
  uint64_t seed = 7;
  ModelConfig model;
  TrainConfig train;
  SceneConfig data;
  AugmentConfig augment;
  std::string eval_mask = "noc";  // noc | all

  std::string dataset_dir;
  std::string val_dir;
  std::string out_dir = "run";
};

RunConfig default_run_config();
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_file(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace stereo
