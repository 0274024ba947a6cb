#include <doctest.h>

#include <cstring>
#include <fstream>

#include "stereo/checkpoint.hpp"
#include "stereo/config.hpp"
#include "stereo/image_io.hpp"
#include "support.hpp"

using namespace stereo;

TEST_CASE("pfm round-trips bit-exactly with the expected header") {
  const auto dir = testing::scratch_dir("pfm");
  Rng rng(1);
  Image disp(1, 7, 9);
  for (auto& v : disp.pix) v = static_cast<float>(rng.uniform(-30, 300));
  disp.pix[3] = 0.25f;  // exact binary fraction
  const std::string path = dir + "/disp.pfm";
  write_pfm(path, disp);

  // Header: grayscale tag, dims, negative (little-endian) scale.
  std::ifstream in(path, std::ios::binary);
  std::string tag;
  int w, h;
  double scale;
  in >> tag >> w >> h >> scale;
  CHECK(tag == "Pf");
  CHECK(w == 9);
  CHECK(h == 7);
  CHECK(scale < 0);

  const Image back = read_pfm(path);
  REQUIRE(back.same_shape(disp));
  for (size_t i = 0; i < disp.pix.size(); ++i) {
    CHECK(std::memcmp(&back.pix[i], &disp.pix[i], sizeof(float)) == 0);
  }
}

TEST_CASE("pfm rows are stored bottom-up") {
  Image disp(1, 2, 2);
  disp.at(0, 0, 0) = 1;
  disp.at(0, 0, 1) = 2;
  disp.at(0, 1, 0) = 3;
  disp.at(0, 1, 1) = 4;
  const auto dir = testing::scratch_dir("pfm_rows");
  write_pfm(dir + "/d.pfm", disp);
  std::ifstream in(dir + "/d.pfm", std::ios::binary);
  std::string line;
  std::getline(in, line);  // Pf
  std::getline(in, line);  // dims
  std::getline(in, line);  // scale
  float raw[4];
  in.read(reinterpret_cast<char*>(raw), sizeof(raw));
  CHECK(raw[0] == 3);  // bottom row first
  CHECK(raw[1] == 4);
  CHECK(raw[2] == 1);
  CHECK(raw[3] == 2);
}

TEST_CASE("png color round-trip within quantization") {
  const auto dir = testing::scratch_dir("png");
  Rng rng(2);
  Image im(3, 12, 17);
  for (auto& v : im.pix) v = static_cast<float>(rng.uniform(0, 1));
  write_png(dir + "/a.png", im);
  const Image back = read_png(dir + "/a.png");
  REQUIRE(back.same_shape(im));
  for (size_t i = 0; i < im.pix.size(); ++i)
    CHECK(std::abs(back.pix[i] - im.pix[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("gray png preserves binary masks exactly") {
  const auto dir = testing::scratch_dir("png_mask");
  Image mask(1, 5, 6);
  for (size_t i = 0; i < mask.pix.size(); ++i) mask.pix[i] = i % 3 == 0 ? 1.0f : 0.0f;
  write_png(dir + "/m.png", mask);
  const Image back = read_png(dir + "/m.png");
  for (size_t i = 0; i < mask.pix.size(); ++i) CHECK(back.pix[i] == mask.pix[i]);
}

TEST_CASE("checkpoint round-trips bit-exactly including metadata") {
  const auto dir = testing::scratch_dir("ckpt");
  Rng rng(3);
  Checkpoint ckpt;
  ckpt.meta["step"] = 1234;
  ckpt.extra["note"] = "x";
  Checkpoint::Entry e1{"enc.w", {2, 3}, {}};
  for (int i = 0; i < 6; ++i) e1.values.push_back(static_cast<float>(rng.normal()));
  Checkpoint::Entry e2{"rum.b", {4}, {1e-8f, -0.0f, 3.5f, 7.25f}};
  ckpt.entries = {e1, e2};
  save_checkpoint(dir + "/m.ckpt", ckpt);
  const Checkpoint back = load_checkpoint(dir + "/m.ckpt");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.meta.at("step") == 1234);
  CHECK(back.extra.at("note") == "x");
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.entries[i].name == ckpt.entries[i].name);
    CHECK(back.entries[i].shape == ckpt.entries[i].shape);
    REQUIRE(back.entries[i].values.size() == ckpt.entries[i].values.size());
    CHECK(std::memcmp(back.entries[i].values.data(), ckpt.entries[i].values.data(),
                      back.entries[i].values.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("param store snapshot and restore") {
  ParamStore<float> params;
  Rng rng(4);
  params.add("a", testing::random_tensor<float>({3, 2}, rng));
  params.add("b", testing::random_tensor<float>({5}, rng));
  CHECK_THROWS_AS(params.add("a", Tensor<float>::zeros({1})), UsageError);

  Checkpoint snap = snapshot_params(params);
  const auto saved_a = params.find("a")->data;
  for (auto& v : params.find("a")->data) v = 0;
  restore_params(params, snap);
  CHECK(params.find("a")->data == saved_a);

  // Shape mismatch is an error.
  ParamStore<float> other;
  other.add("a", Tensor<float>::zeros({4, 2}));
  other.add("b", Tensor<float>::zeros({5}));
  CHECK_THROWS_AS(restore_params(other, snap), IoError);
}

TEST_CASE("run config parses and rejects unknown keys") {
  auto j = run_config_to_json(default_run_config());
  RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.model.corr_radius == 4);
  CHECK(cfg.model.corr_groups == 4);
  CHECK(cfg.model.iters_per_level == std::vector<int>{4, 4, 4});
  CHECK(cfg.train.gamma == doctest::Approx(0.9));

  j["model"]["bogus_knob"] = 1;
  CHECK_THROWS_WITH_AS(run_config_from_json(j), "unknown config key: model.bogus_knob",
                       ConfigError);
  j["model"].erase("bogus_knob");
  j["fuzz"] = 2;
  CHECK_THROWS_WITH_AS(run_config_from_json(j), "unknown config key: fuzz", ConfigError);
}

TEST_CASE("run config validates field values") {
  auto j = run_config_to_json(default_run_config());
  j["model"]["corr_radius"] = 3;  // 2r+1 = 7, not a square
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = run_config_to_json(default_run_config());
  j["model"]["corr_schedule"] = "sometimes";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = run_config_to_json(default_run_config());
  j["eval_mask"] = "both";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("colorize_disparity emits an RGB rendering") {
  Image d(1, 4, 4);
  for (size_t i = 0; i < d.pix.size(); ++i) d.pix[i] = static_cast<float>(i);
  const Image viz = colorize_disparity(d, 0, 15);
  CHECK(viz.channels == 3);
  CHECK(viz.height == 4);
  // Low and high ends map to different colors.
  CHECK(std::abs(viz.at(2, 0, 0) - viz.at(2, 3, 3)) + std::abs(viz.at(0, 0, 0) - viz.at(0, 3, 3)) >
        0.5f);
}
