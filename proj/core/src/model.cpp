#include "stereo/model.hpp"

#include <cmath>

namespace stereo {

void ModelConfig::validate() const {
  if (feat_channels < 4 || feat_channels % 4 != 0)
    throw ConfigError("model: feat_channels must be a positive multiple of 4");
  if (hidden_channels < 1 || context_channels < 1) throw ConfigError("model: bad channel counts");
  if (corr_radius < 1) throw ConfigError("model: corr_radius must be >= 1");
  const int k = static_cast<int>(std::lround(std::sqrt(2.0 * corr_radius + 1.0)));
  if (k * k != 2 * corr_radius + 1)
    throw ConfigError("model: 2r+1 must be a perfect square for the 2-D window");
  if (corr_groups < 1 || feat_channels % corr_groups != 0)
    throw ConfigError("model: feat_channels must divide evenly into corr_groups");
  if (corr_dilation < 1) throw ConfigError("model: corr_dilation must be >= 1");
  if (offset_bound <= 0) throw ConfigError("model: offset_bound must be positive");
  if (attn_layers < 0) throw ConfigError("model: attn_layers must be >= 0");
  if (iters_per_level.size() != 3) throw ConfigError("model: iters_per_level needs 3 entries");
  int total = 0;
  for (int n : iters_per_level) {
    if (n < 0) throw ConfigError("model: negative iteration count");
    total += n;
  }
  if (total < 1) throw ConfigError("model: at least one refinement iteration required");
}

namespace {

template <typename T>
ConvParams<T> make_conv(ParamStore<T>& params, Rng& rng, const std::string& name, int c_out,
                        int c_in, int k, double stddev_override = -1.0) {
  const double stddev = stddev_override >= 0
                            ? stddev_override
                            : std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  ConvParams<T> p;
  p.w = params.add(name + ".w", random_init<T>({c_out, c_in, k, k}, rng, stddev));
  p.b = params.add(name + ".b", Tensor<T>::zeros({c_out}));
  return p;
}

// Bias the upsampling logits so the softmaxed weights start as the bilinear
// kernel of each subpixel phase; the sequence loss never reaches this head,
// so its initialization is the operator actually used.
template <typename T>
void init_upsample_bias(const TensorPtr<T>& bias, int factor) {
  const int f2 = factor * factor;
  for (int n = 0; n < 9; ++n) {
    const int ny = n / 3 - 1, nx = n % 3 - 1;
    for (int sub = 0; sub < f2; ++sub) {
      const int ry = sub / factor, rx = sub % factor;
      const double yc = (ry + 0.5) / factor - 0.5;
      const double xc = (rx + 0.5) / factor - 0.5;
      const double wy = std::max(0.0, 1.0 - std::abs(yc - ny));
      const double wx = std::max(0.0, 1.0 - std::abs(xc - nx));
      bias->data[static_cast<size_t>(n) * f2 + sub] =
          static_cast<T>(std::log(std::max(wy * wx, 1e-4)));
    }
  }
}

ModelConfig validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// UpdateBlock
// ---------------------------------------------------------------------------

template <typename T>
UpdateBlock<T>::UpdateBlock(ParamStore<T>& params, Rng& rng, const ModelConfig& cfg) : cfg_(cfg) {
  const int ch = cfg.hidden_channels;
  const int cc = cfg.context_channels;
  const int corr_ch = cfg.corr_groups * cfg.corr_pairs();
  const int x_ch = ch + cc;  // motion features + context

  ctx_conv_ = make_conv(params, rng, "rum.ctx", cc, cfg.feat_channels, 3);
  hid_conv_ = make_conv(params, rng, "rum.hid", ch, cfg.feat_channels, 3);
  motion_ = make_conv(params, rng, "rum.motion", ch, corr_ch + 1, 3);
  gate_z_ = make_conv(params, rng, "rum.gate_z", ch, ch + x_ch, 1);
  gate_r_ = make_conv(params, rng, "rum.gate_r", ch, ch + x_ch, 1);
  cand_h_ = make_conv(params, rng, "rum.cand_h", ch, ch, 3);
  cand_x_ = make_conv(params, rng, "rum.cand_x", ch, x_ch, 1);
  delta1_ = make_conv(params, rng, "rum.delta1", 32, ch, 3);
  delta2_ = make_conv(params, rng, "rum.delta2", 1, 32, 3, 1e-3);
  up_ = make_conv(params, rng, "rum.up", 9 * 16, ch, 1, 1e-3);
  init_upsample_bias(up_.b, 4);
  // Near-zero offset head: training starts from an effectively fixed window
  // while every head weight still receives gradient.
  off1_ = make_conv(params, rng, "rum.off1", 32, ch + cc, 1);
  off2_ = make_conv(params, rng, "rum.off2", 2 * cfg.corr_pairs(), 32, 1, 1e-3);
}

template <typename T>
TensorPtr<T> UpdateBlock<T>::context(const TensorPtr<T>& feat) const {
  return relu(conv2d(feat, ctx_conv_.w, ctx_conv_.b, 1, 1));
}

template <typename T>
TensorPtr<T> UpdateBlock<T>::init_hidden(const TensorPtr<T>& feat) const {
  return tanh(conv2d(feat, hid_conv_.w, hid_conv_.b, 1, 1));
}

template <typename T>
TensorPtr<T> UpdateBlock<T>::offsets(const TensorPtr<T>& hidden, const TensorPtr<T>& ctx) const {
  auto x = concat<T>({hidden, ctx}, 0);
  auto head = relu(conv2d(x, off1_.w, off1_.b, 1, 0));
  auto raw = conv2d(head, off2_.w, off2_.b, 1, 0);
  const int d = cfg_.corr_pairs();
  auto shaped = reshape(raw, {2, d, raw->dim(1), raw->dim(2)});
  return mul_scalar(tanh(shaped), static_cast<T>(cfg_.offset_bound));
}

template <typename T>
typename UpdateBlock<T>::StepOut UpdateBlock<T>::step(const TensorPtr<T>& hidden,
                                                      const TensorPtr<T>& ctx,
                                                      const TensorPtr<T>& corr,
                                                      const TensorPtr<T>& disp) const {
  if (hidden->dim(1) != corr->dim(1) || hidden->dim(2) != corr->dim(2) ||
      disp->dim(1) != corr->dim(1) || disp->dim(2) != corr->dim(2))
    throw InputError("update step: spatial sizes differ");
  auto m = relu(conv2d(concat<T>({corr, disp}, 0), motion_.w, motion_.b, 1, 1));
  auto x = concat<T>({m, ctx}, 0);
  auto hx = concat<T>({hidden, x}, 0);
  auto z = sigmoid(conv2d(hx, gate_z_.w, gate_z_.b, 1, 0));
  auto r = sigmoid(conv2d(hx, gate_r_.w, gate_r_.b, 1, 0));
  auto cand = tanh(add(conv2d(mul(r, hidden), cand_h_.w, cand_h_.b, 1, 1),
                       conv2d(x, cand_x_.w, cand_x_.b, 1, 0)));
  // h' = (1-z) h + z h~: a convex blend of two (-1,1) terms stays inside.
  auto one_minus_z = add_scalar(neg(z), T(1));
  auto new_hidden = add(mul(one_minus_z, hidden), mul(z, cand));

  StepOut out;
  out.hidden = new_hidden;
  auto d1 = relu(conv2d(new_hidden, delta1_.w, delta1_.b, 1, 1));
  out.delta = conv2d(d1, delta2_.w, delta2_.b, 1, 1);
  auto logits = conv2d(new_hidden, up_.w, up_.b, 1, 0);
  auto shaped = reshape(logits, {9, 16, logits->dim(1), logits->dim(2)});
  out.up_weights = reshape(softmax(shaped, 0), {9 * 16, logits->dim(1), logits->dim(2)});
  return out;
}

// ---------------------------------------------------------------------------
// StereoModel
// ---------------------------------------------------------------------------

template <typename T>
StereoModel<T>::StereoModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(validated(cfg)),
      init_rng_(seed),
      encoder_(params_, init_rng_, cfg_.feat_channels),
      attention_(params_, init_rng_, cfg_.feat_channels, cfg_.attn_layers),
      update_(params_, init_rng_, cfg_) {}

template <typename T>
std::vector<DisparityField<T>> StereoModel<T>::run_level(const TensorPtr<T>& f1,
                                                         const TensorPtr<T>& f2,
                                                         const TensorPtr<T>& ctx_feat,
                                                         DisparityField<T> disp, int n_iters,
                                                         TensorPtr<T>* up_weights_out) const {
  if (n_iters < 1) throw UsageError("run_level: n_iters must be >= 1");
  auto ctx = update_.context(ctx_feat);
  auto hidden = update_.init_hidden(ctx_feat);
  std::vector<DisparityField<T>> preds;
  preds.reserve(static_cast<size_t>(n_iters));
  for (int i = 0; i < n_iters; ++i) {
    const CorrMode mode = schedule_mode(cfg_.schedule, i);
    auto off = update_.offsets(hidden, ctx);
    auto f2_resampled = warp_by_disparity(f2, disp.values);
    auto corr = local_correlation(f1, f2_resampled, off, mode, cfg_.corr_radius,
                                  cfg_.corr_dilation, cfg_.corr_groups);
    auto step = update_.step(hidden, ctx, corr, disp.values);
    hidden = step.hidden;
    disp.values = add(disp.values, step.delta);
    preds.push_back(disp);
    if (up_weights_out && i == n_iters - 1) *up_weights_out = step.up_weights;
  }
  return preds;
}

namespace {

// Move a field to the target resolution; disparity is a length, so values
// scale with the width ratio.
template <typename T>
DisparityField<T> rescale_field(const DisparityField<T>& f, int out_h, int out_w,
                                int out_denom) {
  DisparityField<T> out;
  const T ratio = static_cast<T>(out_w) / static_cast<T>(f.values->dim(2));
  out.values = mul_scalar(bilinear_resize(f.values, out_h, out_w), ratio);
  out.scale_denom = out_denom;
  return out;
}

}  // namespace

template <typename T>
CascadePredictions<T> StereoModel<T>::cascade_forward(const TensorPtr<T>& left,
                                                      const TensorPtr<T>& right,
                                                      const std::vector<int>& iters) const {
  if (iters.size() != 3) throw UsageError("cascade_forward: need three iteration counts");
  auto pl = extract(left);
  auto pr = extract(right);

  // Coarsest-level features gather global context before any correlation.
  TensorPtr<T> f1_16 = pl.levels[2], f2_16 = pr.levels[2];
  if (attention_.layer_count() > 0) {
    auto attended = attention_.apply(positional_encoding(f1_16), positional_encoding(f2_16));
    f1_16 = attended.first;
    f2_16 = attended.second;
  }

  CascadePredictions<T> out;
  const int h16 = f1_16->dim(1), w16 = f1_16->dim(2);
  DisparityField<T> disp{Tensor<T>::zeros({1, h16, w16}), 16};

  TensorPtr<T> up_weights;
  for (int k = 0; k < 3; ++k) {
    const int level = 2 - k;  // pyramid index: 2 = 1/16 ... 0 = 1/4
    const int denom = FeaturePyramid<T>::denom_of(level);
    auto f1 = level == 2 ? f1_16 : pl.levels[static_cast<size_t>(level)];
    auto f2 = level == 2 ? f2_16 : pr.levels[static_cast<size_t>(level)];
    if (disp.scale_denom != denom)
      disp = rescale_field(disp, f1->dim(1), f1->dim(2), denom);
    const int n = iters[static_cast<size_t>(k)];
    if (n == 0) {
      out.per_scale[denom] = {};
      continue;
    }
    auto preds = run_level(f1, f2, pl.levels[static_cast<size_t>(level)], disp, n,
                           level == 0 ? &up_weights : nullptr);
    disp = preds.back();
    out.per_scale[denom] = std::move(preds);
  }

  if (disp.scale_denom == 4 && up_weights) {
    out.full_res = {convex_upsample(disp.values, up_weights, 4), 1};
  } else {
    // Ablation variants may stop at a coarser level; fall back to plain
    // resize for the full-resolution field.
    out.full_res = rescale_field(disp, left->dim(1), left->dim(2), 1);
  }
  return out;
}

template <typename T>
DisparityField<T> StereoModel<T>::stacked_inference(const TensorPtr<T>& left,
                                                    const TensorPtr<T>& right, int n_stages,
                                                    const std::vector<int>& iters) const {
  if (n_stages < 1 || n_stages > 3) throw InputError("stacked_inference: n_stages must be 1..3");
  const int div = 16 << (n_stages - 1);
  if (left->dim(1) % div != 0 || left->dim(2) % div != 0)
    throw InputError("stacked_inference: dims must be divisible by 16*2^(stages-1)");
  if (left->shape != right->shape) throw InputError("stacked_inference: image shapes differ");

  // Image pyramid, original resolution first.
  std::vector<TensorPtr<T>> lefts{left}, rights{right};
  for (int s = 1; s < n_stages; ++s) {
    lefts.push_back(avgpool2(lefts.back()));
    rights.push_back(avgpool2(rights.back()));
  }

  // Coarsest stage: full cascade.
  DisparityField<T> current = cascade_forward(lefts.back(), rights.back(), iters).full_res;

  // Finer stages: only the final-level chain, seeded by the previous output.
  for (int s = n_stages - 2; s >= 0; --s) {
    auto pl = extract(lefts[static_cast<size_t>(s)]);
    auto pr = extract(rights[static_cast<size_t>(s)]);
    auto f1 = pl.levels[0];
    auto f2 = pr.levels[0];
    DisparityField<T> init = rescale_field(current, f1->dim(1), f1->dim(2), 4);
    TensorPtr<T> up_weights;
    const int n = std::max(1, iters[2]);
    auto preds = run_level(f1, f2, pl.levels[0], init, n, &up_weights);
    current = {convex_upsample(preds.back().values, up_weights, 4), 1};
  }
  return current;
}

template class UpdateBlock<float>;
template class UpdateBlock<double>;
template class StereoModel<float>;
template class StereoModel<double>;

}  // namespace stereo
