#include "stereo/feature_pyramid.hpp"

#include <cmath>

namespace stereo {

namespace {

template <typename T>
ConvParams<T> make_conv(ParamStore<T>& params, Rng& rng, const std::string& name, int c_out,
                        int c_in, int k) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  ConvParams<T> p;
  p.w = params.add(name + ".w", random_init<T>({c_out, c_in, k, k}, rng, stddev));
  p.b = params.add(name + ".b", Tensor<T>::zeros({c_out}));
  return p;
}

template <typename T>
TensorPtr<T> res_block(const TensorPtr<T>& x, const ConvParams<T>& c1, const ConvParams<T>& c2) {
  auto h = relu(conv2d(x, c1.w, c1.b, 1, 1));
  h = conv2d(h, c2.w, c2.b, 1, 1);
  return relu(add(x, h));
}

}  // namespace

template <typename T>
PyramidEncoder<T>::PyramidEncoder(ParamStore<T>& params, Rng& rng, int out_channels)
    : out_channels_(out_channels) {
  stem_ = make_conv(params, rng, "enc.stem", 32, 3, 3);
  const int widths[4] = {32, 64, 64, 64};
  for (int s = 0; s < 3; ++s) {
    const std::string base = "enc.stage" + std::to_string(s + 1);
    stages_[static_cast<size_t>(s)].down =
        make_conv(params, rng, base + ".down", widths[s + 1], widths[s], 3);
    stages_[static_cast<size_t>(s)].res1 =
        make_conv(params, rng, base + ".res1", widths[s + 1], widths[s + 1], 3);
    stages_[static_cast<size_t>(s)].res2 =
        make_conv(params, rng, base + ".res2", widths[s + 1], widths[s + 1], 3);
    stages_[static_cast<size_t>(s)].out =
        make_conv(params, rng, base + ".out", out_channels, widths[s + 1], 1);
  }
}

template <typename T>
FeaturePyramid<T> PyramidEncoder<T>::extract(const TensorPtr<T>& image) const {
  if (image->ndim() != 3 || image->dim(0) != 3)
    throw InputError("extract: image must be 3 x H x W");
  if (image->dim(1) % 16 != 0 || image->dim(2) % 16 != 0)
    throw InputError("extract: image dims must be divisible by 16");

  FeaturePyramid<T> pyr;
  auto x = relu(conv2d(image, stem_.w, stem_.b, 2, 1));  // 1/2
  for (int s = 0; s < 3; ++s) {
    const auto& st = stages_[static_cast<size_t>(s)];
    x = relu(conv2d(x, st.down.w, st.down.b, 2, 1));  // 1/4, 1/8, 1/16
    x = res_block(x, st.res1, st.res2);
    pyr.levels[static_cast<size_t>(s)] = conv2d(x, st.out.w, st.out.b, 1, 0);
  }
  return pyr;
}

template <typename T>
TensorPtr<T> positional_encoding(const TensorPtr<T>& feat) {
  if (feat->ndim() != 3) throw InputError("positional_encoding: expected C x H x W");
  const int c = feat->dim(0), h = feat->dim(1), w = feat->dim(2);
  if (c % 4 != 0) throw InputError("positional_encoding: channels must be divisible by 4");
  const int bands = c / 4;
  auto pe = Tensor<T>::zeros({c, h, w});
  for (int band = 0; band < bands; ++band) {
    const double freq = 1.0 / std::pow(10000.0, static_cast<double>(band) / bands);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        pe->at3(band, y, x) = static_cast<T>(std::sin(x * freq));
        pe->at3(bands + band, y, x) = static_cast<T>(std::cos(x * freq));
        pe->at3(2 * bands + band, y, x) = static_cast<T>(std::sin(y * freq));
        pe->at3(3 * bands + band, y, x) = static_cast<T>(std::cos(y * freq));
      }
  }
  return add(feat, pe);
}

template <typename T>
TensorPtr<T> linear_attention_tokens(const TensorPtr<T>& q, const TensorPtr<T>& k,
                                     const TensorPtr<T>& v) {
  if (q->ndim() != 2 || k->ndim() != 2 || v->ndim() != 2 || k->dim(0) != v->dim(0) ||
      q->dim(1) != k->dim(1))
    throw ShapeError("linear_attention_tokens: expected token matrices");
  auto phi_q = add_scalar(elu(q), T(1));
  auto phi_k = add_scalar(elu(k), T(1));
  auto kv = matmul(transpose(phi_k, {1, 0}), v);            // C x C
  auto numer = matmul(phi_q, kv);                           // N x C
  auto ones = Tensor<T>::full({k->dim(0), 1}, T(1));
  auto ksum = matmul(transpose(phi_k, {1, 0}), ones);       // C x 1
  auto denom = add_scalar(matmul(phi_q, ksum), T(1e-6));    // N x 1
  return div_rows(numer, denom);
}

template <typename T>
AttentionStack<T>::AttentionStack(ParamStore<T>& params, Rng& rng, int channels, int n_layers) {
  const double stddev = std::sqrt(1.0 / channels);
  for (int i = 0; i < n_layers; ++i) {
    const std::string base = "att.l" + std::to_string(i);
    Layer l;
    l.wq = params.add(base + ".wq", random_init<T>({channels, channels}, rng, stddev));
    l.wk = params.add(base + ".wk", random_init<T>({channels, channels}, rng, stddev));
    l.wv = params.add(base + ".wv", random_init<T>({channels, channels}, rng, stddev));
    // Near-zero merge keeps each layer close to identity at the start, so the
    // coarse correlation stays sharp while the mixing is learned.
    l.wm = params.add(base + ".wm", random_init<T>({channels, channels}, rng, 1e-3));
    layers_.push_back(l);
  }
}

template <typename T>
TensorPtr<T> AttentionStack<T>::attend(const TensorPtr<T>& q_tokens,
                                       const TensorPtr<T>& kv_tokens, const Layer& l) const {
  auto q = matmul(q_tokens, l.wq);
  auto k = matmul(kv_tokens, l.wk);
  auto v = matmul(kv_tokens, l.wv);
  auto att = linear_attention_tokens(q, k, v);
  return add(q_tokens, matmul(att, l.wm));
}

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> AttentionStack<T>::apply(const TensorPtr<T>& a,
                                                               const TensorPtr<T>& b) const {
  if (a->shape != b->shape) throw InputError("attention: map shapes differ");
  const int c = a->dim(0), h = a->dim(1), w = a->dim(2);
  auto to_tokens = [&](const TensorPtr<T>& f) {
    return transpose(reshape(f, {c, h * w}), {1, 0});  // N x C
  };
  auto to_map = [&](const TensorPtr<T>& t) {
    return reshape(transpose(t, {1, 0}), {c, h, w});
  };
  auto ta = to_tokens(a), tb = to_tokens(b);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (i % 2 == 0) {  // self round
      auto na = attend(ta, ta, l);
      auto nb = attend(tb, tb, l);
      ta = na;
      tb = nb;
    } else {  // cross round
      auto na = attend(ta, tb, l);
      auto nb = attend(tb, ta, l);
      ta = na;
      tb = nb;
    }
  }
  return {to_map(ta), to_map(tb)};
}

template class PyramidEncoder<float>;
template class PyramidEncoder<double>;
template class AttentionStack<float>;
template class AttentionStack<double>;
template TensorPtr<float> positional_encoding(const TensorPtr<float>&);
template TensorPtr<double> positional_encoding(const TensorPtr<double>&);
template TensorPtr<float> linear_attention_tokens(const TensorPtr<float>&,
                                                  const TensorPtr<float>&,
                                                  const TensorPtr<float>&);
template TensorPtr<double> linear_attention_tokens(const TensorPtr<double>&,
                                                   const TensorPtr<double>&,
                                                   const TensorPtr<double>&);

}  // namespace stereo
