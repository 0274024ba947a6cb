#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stereo/checkpoint.hpp"
#include "stereo/config.hpp"
#include "stereo/image_io.hpp"
#include "stereo/train.hpp"
#include "support.hpp"

using namespace stereo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(STEREOMATCH_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// Small-but-complete run config so CLI flows finish in seconds.
json tiny_config(const std::string& dataset_dir, const std::string& out_dir) {
  json j;
  j["seed"] = 5;
  j["model"] = {{"feat_channels", 8},  {"hidden_channels", 8}, {"context_channels", 8},
                {"corr_groups", 2},    {"attn_layers", 1},     {"iters_per_level", {1, 1, 1}}};
  j["train"] = {{"base_lr", 1e-3}, {"warmup_iters", 1}, {"decay_start", 4},
                {"total_iters", 6}, {"seed", 2}};
  j["data"] = {{"height", 32}, {"width", 64}, {"min_layers", 1}, {"max_layers", 2},
               {"disparity_max", 6.0}, {"seed", 77}};
  j["augment"] = {{"enabled", false}};
  j["dataset_dir"] = dataset_dir;
  j["out_dir"] = out_dir;
  return j;
}

std::string write_config(const std::string& dir, const json& j) {
  const std::string path = dir + "/config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen-data: deterministic trees, usage errors") {
  const auto dir = testing::scratch_dir("cli_gen");
  const auto cfg_path = write_config(dir, tiny_config(dir + "/d1", dir));

  auto r1 = run_cli("gen-data --config " + cfg_path + " --count 3 --out " + dir + "/a");
  REQUIRE(r1.exit_code == 0);
  auto r2 = run_cli("gen-data --config " + cfg_path + " --count 3 --out " + dir + "/b");
  REQUIRE(r2.exit_code == 0);
  for (const auto& e : fs::directory_iterator(dir + "/a")) {
    const auto name = e.path().filename().string();
    CHECK(file_bytes(dir + "/a/" + name) == file_bytes(dir + "/b/" + name));
  }

  // Seed override changes the bytes.
  auto r3 = run_cli("gen-data --config " + cfg_path + " --count 3 --seed 123 --out " + dir + "/c");
  REQUIRE(r3.exit_code == 0);
  CHECK(file_bytes(dir + "/a/left_000000.png") != file_bytes(dir + "/c/left_000000.png"));

  CHECK(run_cli("gen-data --config " + cfg_path + " --count 0 --out " + dir + "/z").exit_code ==
        1);
}

TEST_CASE("invalid config keys fail with the key named") {
  const auto dir = testing::scratch_dir("cli_cfg");
  json j = tiny_config(dir + "/d", dir);
  j["model"]["warp_speed"] = 9;
  const auto cfg_path = write_config(dir, j);
  const auto r = run_cli("gen-data --config " + cfg_path + " --count 1 --out " + dir + "/d");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("warp_speed") != std::string::npos);
}

TEST_CASE("train / infer / eval round trip through the CLI") {
  const auto dir = testing::scratch_dir("cli_train");
  json cfg = tiny_config(dir + "/data", dir + "/run");
  const auto cfg_path = write_config(dir, cfg);

  REQUIRE(run_cli("gen-data --config " + cfg_path + " --count 4 --out " + dir + "/data")
              .exit_code == 0);
  const auto train_result = run_cli("train --config " + cfg_path);
  REQUIRE(train_result.exit_code == 0);
  REQUIRE(fs::exists(dir + "/run/model.ckpt"));
  REQUIRE(fs::exists(dir + "/run/train_log.jsonl"));

  // Missing dataset directory is a failure.
  json broken = cfg;
  broken["dataset_dir"] = dir + "/nope";
  const auto broken_path = dir + "/broken.json";
  std::ofstream(broken_path) << broken.dump();
  CHECK(run_cli("train --config " + broken_path).exit_code != 0);

  // Single-stage inference through the CLI equals the library path bitwise.
  const auto infer_result =
      run_cli("infer --checkpoint " + dir + "/run/model.ckpt --left " + dir +
              "/data/left_000000.png --right " + dir + "/data/right_000000.png --stages 1 --out " +
              dir + "/pred.pfm --viz " + dir + "/viz.png");
  REQUIRE(infer_result.exit_code == 0);
  REQUIRE(fs::exists(dir + "/pred.pfm"));
  REQUIRE(fs::exists(dir + "/viz.png"));

  {
    const Checkpoint ckpt = load_checkpoint(dir + "/run/model.ckpt");
    RunConfig rc = run_config_from_json(ckpt.extra.at("run_config"));
    StereoModel<float> model(rc.model, rc.seed);
    restore_params(model.params(), ckpt);
    const Image left = read_png(dir + "/data/left_000000.png");
    const Image right = read_png(dir + "/data/right_000000.png");
    const Image disp = infer_disparity(model, left, right, 1, rc.model.iters_per_level);
    write_pfm(dir + "/lib.pfm", disp);
    CHECK(file_bytes(dir + "/pred.pfm") == file_bytes(dir + "/lib.pfm"));
  }

  // Mismatched image sizes are rejected.
  {
    Image tall(3, 48, 64, 0.5f);
    write_png(dir + "/tall.png", tall);
    CHECK(run_cli("infer --checkpoint " + dir + "/run/model.ckpt --left " + dir +
                  "/data/left_000000.png --right " + dir + "/tall.png --out " + dir + "/x.pfm")
              .exit_code != 0);
  }

  // Evaluating the ground truth against itself reports zeros.
  const auto eval_result = run_cli("eval --pred " + dir + "/data --gt " + dir + "/data --out " +
                                   dir + "/report.jsonl --csv " + dir + "/report.csv");
  REQUIRE(eval_result.exit_code == 0);
  std::ifstream report(dir + "/report.jsonl");
  std::string line, last;
  std::vector<json> rows;
  while (std::getline(report, line))
    if (!line.empty()) {
      rows.push_back(json::parse(line));
      last = line;
    }
  REQUIRE(rows.size() == 5);  // 4 scenes + aggregate
  const json agg = json::parse(last);
  CHECK(agg.at("aggregate") == true);
  CHECK(agg.at("avg_err") == doctest::Approx(0.0));
  CHECK(agg.at("bad_2") == doctest::Approx(0.0));

  // Aggregate equals the pixel-weighted mean of the per-image rows.
  double weighted = 0;
  int64_t pixels = 0;
  for (size_t i = 0; i + 1 < rows.size(); ++i) {
    weighted += rows[i].at("avg_err").get<double>() * rows[i].at("pixels").get<int64_t>();
    pixels += rows[i].at("pixels").get<int64_t>();
  }
  CHECK(agg.at("avg_err").get<double>() == doctest::Approx(weighted / pixels));
  CHECK(fs::exists(dir + "/report.csv"));

  // A missing prediction is reported with its index.
  fs::create_directories(dir + "/partial");
  fs::copy(dir + "/data/disp_000000.pfm", dir + "/partial/disp_000000.pfm");
  const auto missing = run_cli("eval --pred " + dir + "/partial --gt " + dir + "/data");
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("1") != std::string::npos);
  CHECK(missing.output.find("missing") != std::string::npos);
}

TEST_CASE("resume continues a finished checkpoint schedule") {
  const auto dir = testing::scratch_dir("cli_resume");
  json cfg = tiny_config(dir + "/data", dir + "/run");
  cfg["train"]["total_iters"] = 4;
  cfg["train"]["decay_start"] = 3;
  const auto cfg_path = write_config(dir, cfg);
  REQUIRE(run_cli("gen-data --config " + cfg_path + " --count 2 --out " + dir + "/data")
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + cfg_path).exit_code == 0);

  // Extend the schedule and resume from the finished checkpoint.
  cfg["train"]["total_iters"] = 8;
  cfg["train"]["decay_start"] = 6;
  cfg["out_dir"] = dir + "/run2";
  const auto cfg2 = dir + "/config2.json";
  std::ofstream(cfg2) << cfg.dump();
  REQUIRE(run_cli("train --config " + cfg2 + " --resume " + dir + "/run/model.ckpt").exit_code ==
          0);
  const Checkpoint ckpt = load_checkpoint(dir + "/run2/model.ckpt");
  CHECK(ckpt.meta.at("step") == 8);

  // The resumed log continues at step 4.
  std::ifstream log(dir + "/run2/train_log.jsonl");
  std::string first_line;
  std::getline(log, first_line);
  CHECK(json::parse(first_line).at("step") == 4);
}

TEST_CASE("ablate emits one deterministic CSV row per grid cell") {
  const auto dir = testing::scratch_dir("cli_ablate");
  json cfg = tiny_config(dir + "/data", dir + "/run");
  cfg["data"]["height"] = 64;  // divisible by 16 * 2^(3-1) for stacked rows
  cfg["data"]["width"] = 128;
  const auto cfg_path = write_config(dir, cfg);
  REQUIRE(run_cli("gen-data --config " + cfg_path + " --count 2 --out " + dir + "/data")
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + cfg_path).exit_code == 0);
  const std::string base = "ablate --config " + cfg_path + " --checkpoint " + dir +
                           "/run/model.ckpt --data " + dir + "/data";

  auto count_rows = [&](const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++n;
    return n - 1;  // header
  };

  REQUIRE(run_cli(base + " --suite correlation --out " + dir + "/corr.csv").exit_code == 0);
  CHECK(count_rows(dir + "/corr.csv") == 5);
  REQUIRE(run_cli(base + " --suite cascades --out " + dir + "/casc.csv").exit_code == 0);
  CHECK(count_rows(dir + "/casc.csv") == 3);
  REQUIRE(run_cli(base + " --suite stacked --out " + dir + "/stack.csv").exit_code == 0);
  CHECK(count_rows(dir + "/stack.csv") == 3);
  REQUIRE(run_cli(base + " --suite disturb --out " + dir + "/dist.csv").exit_code == 0);
  CHECK(count_rows(dir + "/dist.csv") == 7);

  REQUIRE(run_cli(base + " --suite correlation --out " + dir + "/corr2.csv").exit_code == 0);
  CHECK(file_bytes(dir + "/corr.csv") == file_bytes(dir + "/corr2.csv"));

  CHECK(run_cli(base + " --suite everything").exit_code == 1);
  CHECK(run_cli("ablate --config " + cfg_path + " --checkpoint " + dir +
                "/none.ckpt --suite cascades --data " + dir + "/data")
            .exit_code == 2);
}
