#include "stereo/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stereo/image_io.hpp"

namespace stereo {

void TrainConfig::validate() const {
  if (base_lr <= 0) throw ConfigError("train: base_lr must be positive");
  if (gamma <= 0 || gamma > 1) throw ConfigError("train: gamma must be in (0, 1]");
  if (warmup_iters < 0 || warmup_iters >= decay_start || decay_start >= total_iters)
    throw ConfigError("train: need 0 <= warmup < decay_start < total_iters");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
}

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter >= cfg.total_iters) throw UsageError("lr_at: iteration out of range");
  if (iter < cfg.warmup_iters)
    return cfg.base_lr * (0.05 + 0.95 * static_cast<double>(iter) / cfg.warmup_iters);
  if (iter < cfg.decay_start) return cfg.base_lr;
  const int span = std::max(1, cfg.total_iters - 1 - cfg.decay_start);
  return cfg.base_lr * (1.0 - 0.95 * static_cast<double>(iter - cfg.decay_start) / span);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
AdamOptimizer<T>::AdamOptimizer(ParamStore<T>& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(static_cast<size_t>(t->size()), T(0));
    v_.emplace_back(static_cast<size_t>(t->size()), T(0));
  }
}

template <typename T>
double AdamOptimizer<T>::clip_global_norm(double max_norm) {
  double sq = 0;
  for (const auto& [name, t] : params_->items()) {
    if (t->grad.empty()) continue;
    for (T g : t->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (const auto& [name, t] : params_->items())
      for (T& g : t->grad) g *= scale;
  }
  return norm;
}

template <typename T>
void AdamOptimizer<T>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t idx = 0;
  for (const auto& [name, t] : params_->items()) {
    auto& m = m_[idx];
    auto& v = v_[idx];
    ++idx;
    if (t->grad.empty()) continue;
    for (size_t i = 0; i < m.size(); ++i) {
      const double g = static_cast<double>(t->grad[i]);
      m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      t->data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template <typename T>
void AdamOptimizer<T>::save_state(Checkpoint& ckpt) const {
  size_t idx = 0;
  for (const auto& [name, t] : params_->items()) {
    std::vector<float> m(m_[idx].begin(), m_[idx].end());
    std::vector<float> v(v_[idx].begin(), v_[idx].end());
    ckpt.entries.push_back({"opt.m." + name, t->shape, std::move(m)});
    ckpt.entries.push_back({"opt.v." + name, t->shape, std::move(v)});
    ++idx;
  }
  ckpt.meta["adam_steps"] = t_;
}

template <typename T>
void AdamOptimizer<T>::restore_state(const Checkpoint& ckpt) {
  size_t idx = 0;
  for (const auto& [name, t] : params_->items()) {
    const auto* m = ckpt.find("opt.m." + name);
    const auto* v = ckpt.find("opt.v." + name);
    if (!m || !v) throw IoError("checkpoint missing optimizer state for " + name);
    m_[idx].assign(m->values.begin(), m->values.end());
    v_[idx].assign(v->values.begin(), v->values.end());
    ++idx;
  }
  auto it = ckpt.meta.find("adam_steps");
  t_ = it == ckpt.meta.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

TensorPtr<float> ones_mask(int h, int w) { return Tensor<float>::full({1, h, w}, 1.0f); }

double validation_epe(const StereoModel<float>& model, const std::vector<ScenePair>& val_set,
                      bool mask_occluded) {
  NoGradGuard guard;
  double acc = 0;
  int64_t count = 0;
  for (const auto& pair : val_set) {
    auto preds = model.cascade_forward(tensor_from_image(pair.left),
                                       tensor_from_image(pair.right),
                                       model.config().iters_per_level);
    const auto& out = preds.full_res.values;
    for (int y = 0; y < pair.disp.height; ++y)
      for (int x = 0; x < pair.disp.width; ++x) {
        if (mask_occluded && pair.occ.at(0, y, x) < 0.5f) continue;
        acc += std::abs(static_cast<double>(out->at3(0, y, x)) - pair.disp.at(0, y, x));
        ++count;
      }
  }
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train_model(StereoModel<float>& model, const std::vector<ScenePair>& train_set,
                        const std::vector<ScenePair>& val_set, const TrainConfig& cfg,
                        const AugmentConfig& aug, const std::string& out_dir,
                        const Checkpoint* resume) {
  cfg.validate();
  if (train_set.empty()) throw InputError("train: empty dataset");

  AdamOptimizer<float> opt(model.params());
  int start_step = 0;
  if (resume) {
    restore_params(model.params(), *resume);
    opt.restore_state(*resume);
    auto it = resume->meta.find("step");
    start_step = it == resume->meta.end() ? 0 : static_cast<int>(it->second);
  }

  std::ofstream log_file, aug_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir + "/train_log.jsonl", start_step > 0 ? std::ios::app : std::ios::out);
    if (aug.enabled)
      aug_file.open(out_dir + "/aug_log.jsonl", start_step > 0 ? std::ios::app : std::ios::out);
  }

  TrainResult result;
  const auto& iters = model.config().iters_per_level;
  for (int step = start_step; step < cfg.total_iters; ++step) {
    const double lr = lr_at(step, cfg);
    model.params().zero_grad();

    double step_loss = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      // Stateless draws keep resumed runs on the original sample sequence.
      const uint64_t draw =
          mix_seed(cfg.seed, static_cast<uint64_t>(step) * cfg.batch_size + b);
      const auto& base = train_set[draw % train_set.size()];

      const ScenePair* pair = &base;
      ScenePair augmented;
      if (aug.enabled) {
        nlohmann::json rec;
        augmented = augment_pair(base, mix_seed(draw, 0x617567ull), aug,
                                 aug_file.is_open() ? &rec : nullptr);
        if (aug_file.is_open()) {
          rec["step"] = step;
          aug_file << rec.dump() << "\n";
        }
        pair = &augmented;
      }

      auto gt = tensor_from_image(pair->disp);
      auto mask = cfg.mask_occluded ? tensor_from_image(pair->occ)
                                    : ones_mask(pair->disp.height, pair->disp.width);
      auto preds = model.cascade_forward(tensor_from_image(pair->left),
                                         tensor_from_image(pair->right), iters);
      auto loss = sequence_loss(preds, gt, mask, cfg.gamma);
      if (cfg.batch_size > 1) loss = mul_scalar(loss, 1.0f / cfg.batch_size);
      const double value = static_cast<double>(loss->item());
      if (!std::isfinite(value))
        throw NumericError("training diverged (non-finite loss) at step " +
                           std::to_string(step) + ", lr " + std::to_string(lr));
      step_loss += value;
      loss->backward();
    }

    opt.clip_global_norm(cfg.grad_clip);
    opt.step(lr);
    result.losses.push_back(step_loss);

    double val = -1;
    if (cfg.val_every > 0 && !val_set.empty() &&
        ((step + 1) % cfg.val_every == 0 || step + 1 == cfg.total_iters)) {
      val = validation_epe(model, val_set, cfg.mask_occluded);
      result.val_epe.emplace_back(step, val);
      result.final_val_epe = val;
    }
    if (log_file.is_open()) {
      nlohmann::json line{{"step", step}, {"lr", lr}, {"loss", step_loss}};
      if (val >= 0) line["val_epe"] = val;
      log_file << line.dump() << "\n";
    }
  }

  if (cfg.val_every == 0 && !val_set.empty()) {
    result.final_val_epe = validation_epe(model, val_set, cfg.mask_occluded);
  }

  result.checkpoint = snapshot_params(model.params());
  opt.save_state(result.checkpoint);
  result.checkpoint.meta["step"] = cfg.total_iters;
  if (!out_dir.empty()) save_checkpoint(out_dir + "/model.ckpt", result.checkpoint);
  return result;
}

Image infer_disparity(const StereoModel<float>& model, const Image& left, const Image& right,
                      int n_stages, const std::vector<int>& iters) {
  NoGradGuard guard;
  auto field = model.stacked_inference(tensor_from_image(left), tensor_from_image(right),
                                       n_stages, iters);
  return image_from_tensor(field.values);
}

double mean_epe(const Image& pred, const Image& gt, const Image& mask) {
  double acc = 0;
  int64_t count = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    if (mask.pix[static_cast<size_t>(i)] < 0.5f) continue;
    acc += std::abs(static_cast<double>(pred.pix[static_cast<size_t>(i)]) -
                    static_cast<double>(gt.pix[static_cast<size_t>(i)]));
    ++count;
  }
  if (count == 0) throw InputError("mean_epe: empty mask");
  return acc / static_cast<double>(count);
}

std::vector<ScenePair> load_scene_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.jsonl");
  if (!mf) throw IoError("no manifest.jsonl under " + dir);
  std::vector<ScenePair> scenes;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    auto entry = nlohmann::json::parse(line);
    ScenePair pair;
    pair.left = read_png(dir + "/" + entry.at("left").get<std::string>());
    pair.right = read_png(dir + "/" + entry.at("right").get<std::string>());
    pair.disp = read_pfm(dir + "/" + entry.at("disp").get<std::string>());
    pair.occ = read_png(dir + "/" + entry.at("occ").get<std::string>());
    for (auto& v : pair.occ.pix) v = v > 0.5f ? 1.0f : 0.0f;
    pair.manifest = entry;
    scenes.push_back(std::move(pair));
  }
  if (scenes.empty()) throw IoError("empty dataset manifest in " + dir);
  return scenes;
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace stereo
