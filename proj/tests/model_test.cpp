#include <doctest.h>

#include <cmath>
#include <set>

#include "stereo/checkpoint.hpp"
#include "stereo/model.hpp"
#include "support.hpp"

using namespace stereo;
using stereo::testing::check_gradients;
using stereo::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.feat_channels = 8;
  cfg.hidden_channels = 8;
  cfg.context_channels = 8;
  cfg.corr_groups = 2;
  cfg.attn_layers = 2;
  cfg.iters_per_level = {1, 1, 1};
  return cfg;
}

template <typename T>
void zero_params(ParamStore<T>& params) {
  for (const auto& [name, t] : params.items())
    std::fill(t->data.begin(), t->data.end(), T(0));
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg = tiny_config();
  cfg.corr_groups = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.corr_radius = 2;  // 2r+1 = 5 not a square
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.iters_per_level = {0, 0, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.iters_per_level = {1, 1};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero-weight update block is a fixed point") {
  ParamStore<float> params;
  Rng rng(1);
  const ModelConfig cfg = tiny_config();
  UpdateBlock<float> block(params, rng, cfg);
  zero_params(params);

  auto feat = random_tensor<float>({8, 6, 8}, rng);
  auto ctx = block.context(feat);
  auto hidden = block.init_hidden(feat);
  for (float v : hidden->data) CHECK(v == 0.0f);  // tanh of zeros

  auto corr = random_tensor<float>({2 * 9, 6, 8}, rng);
  auto disp = random_tensor<float>({1, 6, 8}, rng);
  const auto out = block.step(hidden, ctx, corr, disp);
  for (float v : out.delta->data) CHECK(v == 0.0f);
  for (float v : out.hidden->data) CHECK(v == 0.0f);

  // Zero offset head degenerates to the fixed window.
  auto off = block.offsets(hidden, ctx);
  CHECK(off->shape == Shape{2, 9, 6, 8});
  for (float v : off->data) CHECK(v == 0.0f);
}

TEST_CASE("hidden state stays strictly inside (-1, 1)") {
  ParamStore<float> params;
  Rng rng(2);
  const ModelConfig cfg = tiny_config();
  UpdateBlock<float> block(params, rng, cfg);
  auto feat = random_tensor<float>({8, 6, 8}, rng, -2, 2);
  auto ctx = block.context(feat);
  auto hidden = block.init_hidden(feat);
  for (int iter = 0; iter < 4; ++iter) {
    auto corr = random_tensor<float>({18, 6, 8}, rng, -3, 3);
    auto disp = random_tensor<float>({1, 6, 8}, rng, -2, 2);
    hidden = block.step(hidden, ctx, corr, disp).hidden;
    for (float v : hidden->data) {
      CHECK(v > -1.0f);
      CHECK(v < 1.0f);
    }
  }
}

TEST_CASE("offsets are bounded by the configured clip value") {
  ParamStore<float> params;
  Rng rng(3);
  ModelConfig cfg = tiny_config();
  cfg.offset_bound = 2.0;
  UpdateBlock<float> block(params, rng, cfg);
  // Crank the head weights so tanh saturates.
  for (const auto& [name, t] : params.items())
    if (name.rfind("rum.off", 0) == 0)
      for (auto& v : t->data) v = static_cast<float>(rng.uniform(-30, 30));
  auto feat = random_tensor<float>({8, 6, 8}, rng, -2, 2);
  auto off = block.offsets(block.init_hidden(feat), block.context(feat));
  float worst = 0;
  for (float v : off->data) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 2.0f);
  CHECK(worst > 1.5f);  // saturation actually reached
}

TEST_CASE("update-step gradients match finite differences") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(10 + seed);
    ParamStore<double> params;
    ModelConfig cfg = tiny_config();
    UpdateBlock<double> block(params, rng, cfg);
    auto feat = random_tensor<double>({8, 5, 6}, rng, -1, 1);
    auto ctx = block.context(feat);
    auto hidden = block.init_hidden(feat);
    auto corr = random_tensor<double>({18, 5, 6}, rng, -1, 1, true);
    auto disp = random_tensor<double>({1, 5, 6}, rng, -1, 1, true);
    check_gradients([&] { return mean(block.step(hidden, ctx, corr, disp).delta); },
                    {corr, disp}, rng, 1e-4, 1e-4, 10);
  }
}

TEST_CASE("run_level: zero weights keep the initial disparity; length contract") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 7);
  zero_params(model.params());
  Rng rng(4);
  auto f1 = random_tensor<float>({8, 4, 6}, rng);
  auto f2 = random_tensor<float>({8, 4, 6}, rng);
  DisparityField<float> init{random_tensor<float>({1, 4, 6}, rng, 0, 2), 16};

  auto preds = model.run_level(f1, f2, f1, init, 1);
  REQUIRE(preds.size() == 1);
  CHECK(preds[0].values->data == init.values->data);

  auto more = model.run_level(f1, f2, f1, init, 5);
  CHECK(more.size() == 5);
  CHECK_THROWS_AS(model.run_level(f1, f2, f1, init, 0), UsageError);
}

TEST_CASE("cascade prediction counts and scale keys") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 8);
  Rng rng(5);
  auto left = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  auto right = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  const auto out = model.cascade_forward(left, right, {2, 3, 4});
  CHECK(out.prediction_count() == 9);
  CHECK(out.per_scale.at(16).size() == 2);
  CHECK(out.per_scale.at(8).size() == 3);
  CHECK(out.per_scale.at(4).size() == 4);
  // Scales annotate resolution: 1/16 of 32x48 is 2x3.
  CHECK(out.per_scale.at(16)[0].values->shape == Shape{1, 2, 3});
  CHECK(out.per_scale.at(4)[3].values->shape == Shape{1, 8, 12});
  CHECK(out.full_res.values->shape == Shape{1, 32, 48});
  CHECK(out.full_res.scale_denom == 1);

  // Deterministic forward: same inputs, same outputs.
  const auto again = model.cascade_forward(left, right, {2, 3, 4});
  CHECK(again.full_res.values->data == out.full_res.values->data);
}

TEST_CASE("level hand-off doubles disparity values between scales") {
  // Zeroed model with a constant delta head: every iteration adds k, and the
  // cascade rescale doubles the running field between levels.
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 9);
  zero_params(model.params());
  const float k = 0.25f;
  auto bias = model.params().find("rum.delta2.b");
  REQUIRE(bias);
  bias->data[0] = k;

  Rng rng(6);
  auto left = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  auto right = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  const auto out = model.cascade_forward(left, right, {1, 1, 1});
  for (float v : out.per_scale.at(16)[0].values->data) CHECK(v == doctest::Approx(k));
  for (float v : out.per_scale.at(8)[0].values->data) CHECK(v == doctest::Approx(3 * k));
  for (float v : out.per_scale.at(4)[0].values->data) CHECK(v == doctest::Approx(7 * k));
  // Convex upsampling of a constant field scales values by 4.
  for (float v : out.full_res.values->data) CHECK(v == doctest::Approx(28 * k).epsilon(1e-4));
}

TEST_CASE("single-stage stacked inference is bitwise the plain cascade") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 10);
  Rng rng(7);
  auto left = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  auto right = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  const auto stacked = model.stacked_inference(left, right, 1, cfg.iters_per_level);
  const auto cascade = model.cascade_forward(left, right, cfg.iters_per_level);
  CHECK(stacked.values->data == cascade.full_res.values->data);
}

TEST_CASE("stacked inference validates stage count and divisibility") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 11);
  Rng rng(8);
  auto im32 = random_tensor<float>({3, 32, 48}, rng, 0, 1);
  CHECK_THROWS_AS(model.stacked_inference(im32, im32, 0, cfg.iters_per_level), InputError);
  CHECK_THROWS_AS(model.stacked_inference(im32, im32, 4, cfg.iters_per_level), InputError);
  // 32 is not divisible by 16*2 for a 2-stage run.
  CHECK_THROWS_AS(model.stacked_inference(im32, im32, 2, cfg.iters_per_level), InputError);
  auto im64 = random_tensor<float>({3, 64, 96}, rng, 0, 1);
  CHECK_NOTHROW(model.stacked_inference(im64, im64, 2, cfg.iters_per_level));
}

TEST_CASE("checkpoint audit: exactly one shared update block") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 12);
  const Checkpoint snap = snapshot_params(model.params());
  std::set<std::string> rum_names;
  int rum_entries = 0;
  for (const auto& e : snap.entries)
    if (e.name.rfind("rum.", 0) == 0) {
      ++rum_entries;
      CHECK(rum_names.insert(e.name).second);  // no duplicates
    }
  // Context/hidden projections, motion encoder, two gates, two candidate
  // convs, delta head (2), upsample head, offset head (2): 12 convs with
  // weight + bias each.
  CHECK(rum_entries == 24);
  // No per-level or per-stage update-block families exist.
  for (const auto& e : snap.entries) CHECK(e.name.find("rum.level") == std::string::npos);
}

TEST_CASE("gradients reach features, initial disparity and both weight families") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> model(cfg, 13);
  Rng rng(9);
  auto f1 = random_tensor<float>({8, 4, 6}, rng, -1, 1, true);
  auto f2 = random_tensor<float>({8, 4, 6}, rng, -1, 1, true);
  DisparityField<float> init{random_tensor<float>({1, 4, 6}, rng, 0.2, 1.8, true), 4};

  auto preds = model.run_level(f1, f2, f1, init, 2);
  sum(preds.back().values)->backward();

  auto nonzero = [](const TensorPtr<float>& t) {
    if (t->grad.empty()) return false;
    for (float g : t->grad)
      if (g != 0.0f) return true;
    return false;
  };
  CHECK(nonzero(f1));
  CHECK(nonzero(f2));
  CHECK(nonzero(init.values));
  CHECK(nonzero(model.params().find("rum.gate_z.w")));
  CHECK(nonzero(model.params().find("rum.cand_h.w")));
  CHECK(nonzero(model.params().find("rum.off1.w")));
  CHECK(nonzero(model.params().find("rum.off2.w")));
}

TEST_CASE("same seed builds identical models") {
  const ModelConfig cfg = tiny_config();
  StereoModel<float> a(cfg, 99), b(cfg, 99), c(cfg, 100);
  REQUIRE(a.params().items().size() == b.params().items().size());
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a.params().items().size(); ++i) {
    all_equal = all_equal &&
                a.params().items()[i].second->data == b.params().items()[i].second->data;
    any_diff = any_diff ||
               a.params().items()[i].second->data != c.params().items()[i].second->data;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}
