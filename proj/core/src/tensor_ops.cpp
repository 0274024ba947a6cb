#include "stereo/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace stereo {

namespace {

template <typename T>
void check_same_shape(const char* op, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
}

inline int64_t prod_range(const Shape& s, int lo, int hi) {
  int64_t p = 1;
  for (int i = lo; i < hi; ++i) p *= s[static_cast<size_t>(i)];
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  check_same_shape("add", a, b);
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (wire(out, {a, b})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, b, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i];
      if (T* gb = b->grad_acc())
        for (int64_t i = 0; i < n; ++i) gb[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  check_same_shape("sub", a, b);
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  if (wire(out, {a, b})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, b, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i];
      if (T* gb = b->grad_acc())
        for (int64_t i = 0; i < n; ++i) gb[i] -= o->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  check_same_shape("mul", a, b);
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (wire(out, {a, b})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, b, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i] * b->data[i];
      if (T* gb = b->grad_acc())
        for (int64_t i = 0; i < n; ++i) gb[i] += o->grad[i] * a->data[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> neg(const TensorPtr<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
TensorPtr<T> add_scalar(const TensorPtr<T>& a, T s) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + s;
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> mul_scalar(const TensorPtr<T>& a, T s) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * s;
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, s, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i] * s;
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> absolute(const TensorPtr<T>& a) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = std::abs(a->data[i]);
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) {
          const T v = a->data[i];
          ga[i] += o->grad[i] * (v > T(0) ? T(1) : v < T(0) ? T(-1) : T(0));
        }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& a) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] > T(0) ? a->data[i] : T(0);
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i)
          if (a->data[i] > T(0)) ga[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& a) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = T(1) / (T(1) + std::exp(-a->data[i]));
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) {
          const T y = o->data[i];
          ga[i] += o->grad[i] * y * (T(1) - y);
        }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> tanh(const TensorPtr<T>& a) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->data[i] = std::tanh(a->data[i]);
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) {
          const T y = o->data[i];
          ga[i] += o->grad[i] * (T(1) - y * y);
        }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> elu(const TensorPtr<T>& a) {
  auto out = Tensor<T>::zeros(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) {
    const T v = a->data[i];
    out->data[i] = v > T(0) ? v : std::exp(v) - T(1);
  }
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) {
          const T v = a->data[i];
          ga[i] += o->grad[i] * (v > T(0) ? T(1) : o->data[i] + T(1));
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& a, Shape target) {
  if (shape_numel(target) != a->size())
    throw ShapeError("reshape: element count mismatch " + shape_str(a->shape) + " -> " +
                     shape_str(target));
  auto out = Tensor<T>::from_data(std::move(target), a->data);
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    const int64_t n = a->size();
    out->backward_fn = [o, a, n] {
      if (T* ga = a->grad_acc())
        for (int64_t i = 0; i < n; ++i) ga[i] += o->grad[i];
    };
  }
  return out;
}

namespace {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  return st;
}

// dst[out_idx] (+)= src[in_idx] for a permutation of axes.
template <typename T, bool Accumulate>
void permute_raw(const T* src, T* dst, const Shape& in_shape, const std::vector<int>& perm) {
  const size_t nd = in_shape.size();
  Shape out_shape(nd);
  for (size_t i = 0; i < nd; ++i) out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
  const auto in_strides = row_major_strides(in_shape);
  std::vector<int64_t> gather(nd);
  for (size_t i = 0; i < nd; ++i) gather[i] = in_strides[static_cast<size_t>(perm[i])];
  const int64_t total = shape_numel(out_shape);
  std::vector<int> idx(nd, 0);
  for (int64_t o = 0; o < total; ++o) {
    int64_t in_off = 0;
    for (size_t i = 0; i < nd; ++i) in_off += idx[i] * gather[i];
    if constexpr (Accumulate)
      dst[in_off] += src[o];
    else
      dst[o] = src[in_off];
    for (int i = static_cast<int>(nd) - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

}  // namespace

template <typename T>
TensorPtr<T> transpose(const TensorPtr<T>& a, const std::vector<int>& perm) {
  if (perm.size() != a->shape.size()) throw ShapeError("transpose: bad permutation length");
  std::vector<bool> used(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= a->ndim() || used[static_cast<size_t>(p)])
      throw ShapeError("transpose: invalid permutation");
    used[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    out_shape[i] = a->shape[static_cast<size_t>(perm[i])];
  auto out = Tensor<T>::zeros(out_shape);
  permute_raw<T, false>(a->data.data(), out->data.data(), a->shape, perm);
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    const std::vector<int> perm_copy = perm;
    out->backward_fn = [o, a, perm_copy] {
      if (T* ga = a->grad_acc()) permute_raw<T, true>(o->grad.data(), ga, a->shape, perm_copy);
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> concat(const std::vector<TensorPtr<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0]->shape;
  if (axis < 0 || axis >= static_cast<int>(ref.size())) throw ShapeError("concat: bad axis");
  int axis_total = 0;
  for (const auto& p : parts) {
    if (p->ndim() != static_cast<int>(ref.size())) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < p->ndim(); ++i)
      if (i != axis && p->shape[static_cast<size_t>(i)] != ref[static_cast<size_t>(i)])
        throw ShapeError("concat: shape mismatch off-axis");
    axis_total += p->dim(axis);
  }
  Shape out_shape = ref;
  out_shape[static_cast<size_t>(axis)] = axis_total;
  auto out = Tensor<T>::zeros(out_shape);

  const int64_t outer = prod_range(ref, 0, axis);
  const int64_t inner = prod_range(ref, axis + 1, static_cast<int>(ref.size()));
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t block = p->dim(axis) * inner;
    for (int64_t ou = 0; ou < outer; ++ou)
      std::memcpy(out->data.data() + ou * axis_total * inner + offset,
                  p->data.data() + ou * block, sizeof(T) * static_cast<size_t>(block));
    offset += block;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p->tracked();
  if (grad_enabled() && any) {
    out->parents.assign(parts.begin(), parts.end());
    Tensor<T>* o = out.get();
    auto parts_copy = parts;
    out->backward_fn = [o, parts_copy, outer, inner, axis_total] {
      int64_t offset = 0;
      for (const auto& p : parts_copy) {
        const int64_t axis_dim = p->size() / (outer * inner);
        const int64_t blk = axis_dim * inner;
        if (T* gp = p->grad_acc()) {
          for (int64_t ou = 0; ou < outer; ++ou) {
            const T* src = o->grad.data() + ou * axis_total * inner + offset;
            T* dst = gp + ou * blk;
            for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
          }
        }
        offset += blk;
      }
    };
  }
  return out;
}

template <typename T>
std::vector<TensorPtr<T>> split(const TensorPtr<T>& a, int axis, const std::vector<int>& sizes) {
  if (axis < 0 || axis >= a->ndim()) throw ShapeError("split: bad axis");
  int total = 0;
  for (int s : sizes) total += s;
  if (total != a->dim(axis)) throw ShapeError("split: sizes do not cover axis");
  const int64_t outer = prod_range(a->shape, 0, axis);
  const int64_t inner = prod_range(a->shape, axis + 1, a->ndim());
  const int64_t axis_total = a->dim(axis);

  std::vector<TensorPtr<T>> outs;
  int64_t offset = 0;
  for (int s : sizes) {
    Shape sh = a->shape;
    sh[static_cast<size_t>(axis)] = s;
    auto out = Tensor<T>::zeros(sh);
    const int64_t block = static_cast<int64_t>(s) * inner;
    for (int64_t ou = 0; ou < outer; ++ou)
      std::memcpy(out->data.data() + ou * block,
                  a->data.data() + ou * axis_total * inner + offset,
                  sizeof(T) * static_cast<size_t>(block));
    if (wire(out, {a})) {
      Tensor<T>* o = out.get();
      const int64_t off = offset;
      out->backward_fn = [o, a, off, outer, inner, axis_total, block] {
        if (T* ga = a->grad_acc()) {
          for (int64_t ou = 0; ou < outer; ++ou) {
            const T* src = o->grad.data() + ou * block;
            T* dst = ga + ou * axis_total * inner + off;
            for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
      };
    }
    outs.push_back(out);
    offset += block;
  }
  return outs;
}

// ---------------------------------------------------------------------------
// linear algebra / reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->ndim() != 2 || b->ndim() != 2 || a->dim(1) != b->dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " x " +
                     shape_str(b->shape));
  const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
  auto out = Tensor<T>::zeros({m, n});
  detail::gemm(m, n, k, a->data.data(), false, b->data.data(), false, out->data.data(), false);
  if (wire(out, {a, b})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, b, m, k, n] {
      if (T* ga = a->grad_acc())
        detail::gemm(m, k, n, o->grad.data(), false, b->data.data(), true, ga, true);
      if (T* gb = b->grad_acc())
        detail::gemm(k, n, m, a->data.data(), true, o->grad.data(), false, gb, true);
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& a, int axis) {
  if (axis < 0 || axis >= a->ndim()) throw ShapeError("softmax: bad axis");
  const int64_t outer = prod_range(a->shape, 0, axis);
  const int64_t n = a->dim(axis);
  const int64_t inner = prod_range(a->shape, axis + 1, a->ndim());
  auto out = Tensor<T>::zeros(a->shape);
  for (int64_t ou = 0; ou < outer; ++ou)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = ou * n * inner + in;
      T mx = a->data[base];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, a->data[base + j * inner]);
      T s = T(0);
      for (int64_t j = 0; j < n; ++j) {
        const T e = std::exp(a->data[base + j * inner] - mx);
        out->data[base + j * inner] = e;
        s += e;
      }
      const T invs = T(1) / s;
      for (int64_t j = 0; j < n; ++j) out->data[base + j * inner] *= invs;
    }
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, outer, n, inner] {
      if (T* ga = a->grad_acc()) {
        for (int64_t ou = 0; ou < outer; ++ou)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = ou * n * inner + in;
            T dot = T(0);
            for (int64_t j = 0; j < n; ++j)
              dot += o->grad[base + j * inner] * o->data[base + j * inner];
            for (int64_t j = 0; j < n; ++j) {
              const int64_t k = base + j * inner;
              ga[k] += o->data[k] * (o->grad[k] - dot);
            }
          }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& a) {
  T s = T(0);
  for (T v : a->data) s += v;
  auto out = Tensor<T>::from_data({1}, {s});
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a] {
      if (T* ga = a->grad_acc()) {
        const T g = o->grad[0];
        const int64_t n = a->size();
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> mean(const TensorPtr<T>& a) {
  T s = T(0);
  for (T v : a->data) s += v;
  const T inv = T(1) / static_cast<T>(a->size());
  auto out = Tensor<T>::from_data({1}, {s * inv});
  if (wire(out, {a})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, inv] {
      if (T* ga = a->grad_acc()) {
        const T g = o->grad[0] * inv;
        const int64_t n = a->size();
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> div_rows(const TensorPtr<T>& a, const TensorPtr<T>& denom) {
  if (a->ndim() != 2 || denom->ndim() != 2 || denom->dim(1) != 1 || denom->dim(0) != a->dim(0))
    throw ShapeError("div_rows: expected (N,C) and (N,1)");
  const int64_t rows = a->dim(0), cols = a->dim(1);
  auto out = Tensor<T>::zeros(a->shape);
  for (int64_t i = 0; i < rows; ++i) {
    const T inv = T(1) / denom->data[i];
    for (int64_t j = 0; j < cols; ++j) out->data[i * cols + j] = a->data[i * cols + j] * inv;
  }
  if (wire(out, {a, denom})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, a, denom, rows, cols] {
      T* ga = a->grad_acc();
      T* gd = denom->grad_acc();
      for (int64_t i = 0; i < rows; ++i) {
        const T d = denom->data[i];
        const T inv = T(1) / d;
        T acc = T(0);
        for (int64_t j = 0; j < cols; ++j) {
          const T g = o->grad[i * cols + j];
          if (ga) ga[i * cols + j] += g * inv;
          acc += g * a->data[i * cols + j];
        }
        if (gd) gd[i] -= acc * inv * inv;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// spatial
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, int stride, int pad, int out_h,
            int out_w, T* cols) {
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = x + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++row) {
        T* dst = cols + row * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + static_cast<int64_t>(oy) * out_w,
                      dst + static_cast<int64_t>(oy + 1) * out_w, T(0));
            continue;
          }
          const T* src_row = plane + static_cast<int64_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[static_cast<int64_t>(oy) * out_w + ox] =
                (ix >= 0 && ix < w) ? src_row[ix] : T(0);
          }
        }
      }
  }
}

template <typename T>
void col2im_acc(const T* cols, int c_in, int h, int w, int kh, int kw, int stride, int pad,
                int out_h, int out_w, T* gx) {
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    T* plane = gx + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const T* src = cols + row * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst_row = plane + static_cast<int64_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst_row[ix] += src[static_cast<int64_t>(oy) * out_w + ox];
          }
        }
      }
  }
}

}  // namespace

template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    int stride, int padding) {
  const bool batched = x->ndim() == 4;
  if (!batched && x->ndim() != 3) throw ShapeError("conv2d: input must be 3-D or 4-D");
  if (w->ndim() != 4) throw ShapeError("conv2d: weight must be O x C x kh x kw");
  if (b->ndim() != 1 || b->dim(0) != w->dim(0)) throw ShapeError("conv2d: bias must be O");
  const int n = batched ? x->dim(0) : 1;
  const int c_in = batched ? x->dim(1) : x->dim(0);
  const int h = batched ? x->dim(2) : x->dim(1);
  const int width = batched ? x->dim(3) : x->dim(2);
  const int c_out = w->dim(0), kh = w->dim(2), kw = w->dim(3);
  if (w->dim(1) != c_in) throw ShapeError("conv2d: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel dims must be odd");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");
  const int out_h = (h + 2 * padding - kh) / stride + 1;
  const int out_w = (width + 2 * padding - kw) / stride + 1;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: output would be empty");

  const int64_t ckk = static_cast<int64_t>(c_in) * kh * kw;
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  const int64_t in_plane = static_cast<int64_t>(c_in) * h * width;
  const int64_t out_plane = static_cast<int64_t>(c_out) * patch;

  Shape out_shape = batched ? Shape{n, c_out, out_h, out_w} : Shape{c_out, out_h, out_w};
  auto out = Tensor<T>::zeros(out_shape);
  std::vector<T> cols(static_cast<size_t>(ckk * patch));
  for (int i = 0; i < n; ++i) {
    im2col(x->data.data() + i * in_plane, c_in, h, width, kh, kw, stride, padding, out_h, out_w,
           cols.data());
    detail::gemm(c_out, static_cast<int>(patch), static_cast<int>(ckk), w->data.data(), false,
                 cols.data(), false, out->data.data() + i * out_plane, false);
    for (int o = 0; o < c_out; ++o) {
      T* dst = out->data.data() + i * out_plane + static_cast<int64_t>(o) * patch;
      const T bias = b->data[static_cast<size_t>(o)];
      for (int64_t p = 0; p < patch; ++p) dst[p] += bias;
    }
  }
  if (!out->all_finite()) throw NumericError("conv2d: non-finite output");

  if (wire(out, {x, w, b})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, x, w, b, n, c_in, h, width, c_out, kh, kw, stride, padding, out_h,
                        out_w, ckk, patch, in_plane, out_plane] {
      T* gx = x->grad_acc();
      T* gw = w->grad_acc();
      T* gb = b->grad_acc();
      std::vector<T> cols(static_cast<size_t>(ckk * patch));
      std::vector<T> gcols(gx ? static_cast<size_t>(ckk * patch) : 0);
      for (int i = 0; i < n; ++i) {
        const T* go = o->grad.data() + i * out_plane;
        if (gb)
          for (int oc = 0; oc < c_out; ++oc) {
            T acc = T(0);
            const T* row = go + static_cast<int64_t>(oc) * patch;
            for (int64_t p = 0; p < patch; ++p) acc += row[p];
            gb[oc] += acc;
          }
        if (gw) {
          im2col(x->data.data() + i * in_plane, c_in, h, width, kh, kw, stride, padding, out_h,
                 out_w, cols.data());
          detail::gemm(c_out, static_cast<int>(ckk), static_cast<int>(patch), go, false,
                       cols.data(), true, gw, true);
        }
        if (gx) {
          detail::gemm(static_cast<int>(ckk), static_cast<int>(patch), c_out, w->data.data(),
                       true, go, false, gcols.data(), false);
          col2im_acc(gcols.data(), c_in, h, width, kh, kw, stride, padding, out_h, out_w,
                     gx + i * in_plane);
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> grid_sample_bilinear(const TensorPtr<T>& feat, const TensorPtr<T>& coords) {
  if (feat->ndim() != 3) throw ShapeError("grid_sample: feat must be C x H x W");
  if (coords->ndim() != 3 || coords->dim(0) != 2)
    throw ShapeError("grid_sample: coords must be 2 x H' x W'");
  if (!coords->all_finite()) throw InputError("grid_sample: non-finite coordinates");
  const int c = feat->dim(0), h = feat->dim(1), w = feat->dim(2);
  const int oh = coords->dim(1), ow = coords->dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t oplane = static_cast<int64_t>(oh) * ow;
  auto out = Tensor<T>::zeros({c, oh, ow});
  const T* cx = coords->data.data();
  const T* cy = coords->data.data() + oplane;
  for (int64_t p = 0; p < oplane; ++p) {
    const T sx = cx[p], sy = cy[p];
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const T tx = sx - static_cast<T>(x0), ty = sy - static_cast<T>(y0);
    const T w00 = (T(1) - tx) * (T(1) - ty), w01 = tx * (T(1) - ty);
    const T w10 = (T(1) - tx) * ty, w11 = tx * ty;
    const bool i00 = x0 >= 0 && x0 < w && y0 >= 0 && y0 < h;
    const bool i01 = x0 + 1 >= 0 && x0 + 1 < w && y0 >= 0 && y0 < h;
    const bool i10 = x0 >= 0 && x0 < w && y0 + 1 >= 0 && y0 + 1 < h;
    const bool i11 = x0 + 1 >= 0 && x0 + 1 < w && y0 + 1 >= 0 && y0 + 1 < h;
    for (int ch = 0; ch < c; ++ch) {
      const T* plane_ptr = feat->data.data() + ch * plane;
      T v = T(0);
      if (i00) v += w00 * plane_ptr[static_cast<int64_t>(y0) * w + x0];
      if (i01) v += w01 * plane_ptr[static_cast<int64_t>(y0) * w + x0 + 1];
      if (i10) v += w10 * plane_ptr[static_cast<int64_t>(y0 + 1) * w + x0];
      if (i11) v += w11 * plane_ptr[static_cast<int64_t>(y0 + 1) * w + x0 + 1];
      out->data[ch * oplane + p] = v;
    }
  }
  if (wire(out, {feat, coords})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, feat, coords, c, h, w, oh, ow, plane, oplane] {
      T* gf = feat->grad_acc();
      T* gc = coords->grad_acc();
      const T* cx = coords->data.data();
      const T* cy = coords->data.data() + oplane;
      for (int64_t p = 0; p < oplane; ++p) {
        const T sx = cx[p], sy = cy[p];
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const T tx = sx - static_cast<T>(x0), ty = sy - static_cast<T>(y0);
        const bool i00 = x0 >= 0 && x0 < w && y0 >= 0 && y0 < h;
        const bool i01 = x0 + 1 >= 0 && x0 + 1 < w && y0 >= 0 && y0 < h;
        const bool i10 = x0 >= 0 && x0 < w && y0 + 1 >= 0 && y0 + 1 < h;
        const bool i11 = x0 + 1 >= 0 && x0 + 1 < w && y0 + 1 >= 0 && y0 + 1 < h;
        T dx_acc = T(0), dy_acc = T(0);
        for (int ch = 0; ch < c; ++ch) {
          const T g = o->grad[ch * oplane + p];
          if (g == T(0) && !gc) continue;
          const T* plane_ptr = feat->data.data() + ch * plane;
          const T f00 = i00 ? plane_ptr[static_cast<int64_t>(y0) * w + x0] : T(0);
          const T f01 = i01 ? plane_ptr[static_cast<int64_t>(y0) * w + x0 + 1] : T(0);
          const T f10 = i10 ? plane_ptr[static_cast<int64_t>(y0 + 1) * w + x0] : T(0);
          const T f11 = i11 ? plane_ptr[static_cast<int64_t>(y0 + 1) * w + x0 + 1] : T(0);
          if (gf) {
            T* gplane = gf + ch * plane;
            if (i00) gplane[static_cast<int64_t>(y0) * w + x0] += g * (T(1) - tx) * (T(1) - ty);
            if (i01) gplane[static_cast<int64_t>(y0) * w + x0 + 1] += g * tx * (T(1) - ty);
            if (i10) gplane[static_cast<int64_t>(y0 + 1) * w + x0] += g * (T(1) - tx) * ty;
            if (i11) gplane[static_cast<int64_t>(y0 + 1) * w + x0 + 1] += g * tx * ty;
          }
          dx_acc += g * ((T(1) - ty) * (f01 - f00) + ty * (f11 - f10));
          dy_acc += g * ((T(1) - tx) * (f10 - f00) + tx * (f11 - f01));
        }
        if (gc) {
          gc[p] += dx_acc;
          gc[oplane + p] += dy_acc;
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> bilinear_resize(const TensorPtr<T>& x, int out_h, int out_w) {
  if (x->ndim() != 3) throw ShapeError("bilinear_resize: input must be C x H x W");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: bad target size");
  const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t oplane = static_cast<int64_t>(out_h) * out_w;
  auto out = Tensor<T>::zeros({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  // Precompute clamped taps per output row/col.
  std::vector<int> x0s(out_w), x1s(out_w), y0s(out_h), y1s(out_h);
  std::vector<T> txs(out_w), tys(out_h);
  for (int ox = 0; ox < out_w; ++ox) {
    double src = (ox + 0.5) * sx - 0.5;
    double lo = std::floor(src);
    double t = src - lo;
    int x0 = static_cast<int>(lo), x1 = x0 + 1;
    x0s[ox] = std::clamp(x0, 0, w - 1);
    x1s[ox] = std::clamp(x1, 0, w - 1);
    txs[ox] = static_cast<T>(t);
  }
  for (int oy = 0; oy < out_h; ++oy) {
    double src = (oy + 0.5) * sy - 0.5;
    double lo = std::floor(src);
    double t = src - lo;
    int y0 = static_cast<int>(lo), y1 = y0 + 1;
    y0s[oy] = std::clamp(y0, 0, h - 1);
    y1s[oy] = std::clamp(y1, 0, h - 1);
    tys[oy] = static_cast<T>(t);
  }
  for (int ch = 0; ch < c; ++ch) {
    const T* src = x->data.data() + ch * plane;
    T* dst = out->data.data() + ch * oplane;
    for (int oy = 0; oy < out_h; ++oy) {
      const T ty = tys[oy];
      const T* r0 = src + static_cast<int64_t>(y0s[oy]) * w;
      const T* r1 = src + static_cast<int64_t>(y1s[oy]) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T tx = txs[ox];
        const T top = r0[x0s[ox]] * (T(1) - tx) + r0[x1s[ox]] * tx;
        const T bot = r1[x0s[ox]] * (T(1) - tx) + r1[x1s[ox]] * tx;
        dst[static_cast<int64_t>(oy) * out_w + ox] = top * (T(1) - ty) + bot * ty;
      }
    }
  }
  if (wire(out, {x})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, x, c, w, out_h, out_w, plane, oplane, x0s, x1s, y0s, y1s, txs, tys] {
      if (T* gx = x->grad_acc()) {
        for (int ch = 0; ch < c; ++ch) {
          T* gplane = gx + ch * plane;
          const T* go = o->grad.data() + ch * oplane;
          for (int oy = 0; oy < out_h; ++oy) {
            const T ty = tys[oy];
            for (int ox = 0; ox < out_w; ++ox) {
              const T g = go[static_cast<int64_t>(oy) * out_w + ox];
              const T tx = txs[ox];
              gplane[static_cast<int64_t>(y0s[oy]) * w + x0s[ox]] += g * (T(1) - tx) * (T(1) - ty);
              gplane[static_cast<int64_t>(y0s[oy]) * w + x1s[ox]] += g * tx * (T(1) - ty);
              gplane[static_cast<int64_t>(y1s[oy]) * w + x0s[ox]] += g * (T(1) - tx) * ty;
              gplane[static_cast<int64_t>(y1s[oy]) * w + x1s[ox]] += g * tx * ty;
            }
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> avgpool2(const TensorPtr<T>& x) {
  if (x->ndim() != 3) throw ShapeError("avgpool2: input must be C x H x W");
  const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avgpool2: dims must be even");
  const int oh = h / 2, ow = w / 2;
  auto out = Tensor<T>::zeros({c, oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const T v = x->at3(ch, 2 * oy, 2 * ox) + x->at3(ch, 2 * oy, 2 * ox + 1) +
                    x->at3(ch, 2 * oy + 1, 2 * ox) + x->at3(ch, 2 * oy + 1, 2 * ox + 1);
        out->at3(ch, oy, ox) = v * T(0.25);
      }
  if (wire(out, {x})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, x, c, oh, ow] {
      if (x->grad_acc()) {
        for (int ch = 0; ch < c; ++ch)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const T g = o->grad[(static_cast<int64_t>(ch) * oh + oy) * ow + ox] * T(0.25);
              const int h2 = oh * 2, w2 = ow * 2;
              T* gp = x->grad.data() + static_cast<int64_t>(ch) * h2 * w2;
              gp[static_cast<int64_t>(2 * oy) * w2 + 2 * ox] += g;
              gp[static_cast<int64_t>(2 * oy) * w2 + 2 * ox + 1] += g;
              gp[static_cast<int64_t>(2 * oy + 1) * w2 + 2 * ox] += g;
              gp[static_cast<int64_t>(2 * oy + 1) * w2 + 2 * ox + 1] += g;
            }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> convex_upsample(const TensorPtr<T>& values, const TensorPtr<T>& weights,
                             int factor) {
  if (values->ndim() != 3 || values->dim(0) != 1)
    throw ShapeError("convex_upsample: values must be 1 x H x W");
  const int h = values->dim(1), w = values->dim(2);
  const int f2 = factor * factor;
  if (weights->ndim() != 3 || weights->dim(0) != 9 * f2 || weights->dim(1) != h ||
      weights->dim(2) != w)
    throw ShapeError("convex_upsample: weights must be (9*factor^2) x H x W");
  const int oh = h * factor, ow = w * factor;
  auto out = Tensor<T>::zeros({1, oh, ow});
  const T scale = static_cast<T>(factor);
  const int64_t cplane = static_cast<int64_t>(h) * w;
  for (int oy = 0; oy < oh; ++oy) {
    const int y0 = oy / factor, ry = oy % factor;
    for (int ox = 0; ox < ow; ++ox) {
      const int x0 = ox / factor, rx = ox % factor;
      const int sub = ry * factor + rx;
      T acc = T(0);
      for (int ny = -1; ny <= 1; ++ny)
        for (int nx = -1; nx <= 1; ++nx) {
          const int nidx = (ny + 1) * 3 + (nx + 1);
          const int yy = std::clamp(y0 + ny, 0, h - 1);
          const int xx = std::clamp(x0 + nx, 0, w - 1);
          acc += weights->data[(static_cast<int64_t>(nidx) * f2 + sub) * cplane +
                               static_cast<int64_t>(y0) * w + x0] *
                 values->data[static_cast<int64_t>(yy) * w + xx];
        }
      out->data[static_cast<int64_t>(oy) * ow + ox] = acc * scale;
    }
  }
  if (wire(out, {values, weights})) {
    Tensor<T>* o = out.get();
    out->backward_fn = [o, values, weights, factor, h, w, f2, oh, ow, cplane, scale] {
      T* gv = values->grad_acc();
      T* gw = weights->grad_acc();
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = oy / factor, ry = oy % factor;
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = ox / factor, rx = ox % factor;
          const int sub = ry * factor + rx;
          const T g = o->grad[static_cast<int64_t>(oy) * ow + ox] * scale;
          for (int ny = -1; ny <= 1; ++ny)
            for (int nx = -1; nx <= 1; ++nx) {
              const int nidx = (ny + 1) * 3 + (nx + 1);
              const int yy = std::clamp(y0 + ny, 0, h - 1);
              const int xx = std::clamp(x0 + nx, 0, w - 1);
              const int64_t widx = (static_cast<int64_t>(nidx) * f2 + sub) * cplane +
                                   static_cast<int64_t>(y0) * w + x0;
              if (gv) gv[static_cast<int64_t>(yy) * w + xx] += g * weights->data[widx];
              if (gw) gw[widx] += g * values->data[static_cast<int64_t>(yy) * w + xx];
            }
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> coordinate_grid(int h, int w) {
  auto out = Tensor<T>::zeros({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out->data[static_cast<int64_t>(y) * w + x] = static_cast<T>(x);
      out->data[static_cast<int64_t>(h) * w + static_cast<int64_t>(y) * w + x] = static_cast<T>(y);
    }
  return out;
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define STEREO_INSTANTIATE_OPS(T)                                                              \
  template TensorPtr<T> add(const TensorPtr<T>&, const TensorPtr<T>&);                         \
  template TensorPtr<T> sub(const TensorPtr<T>&, const TensorPtr<T>&);                         \
  template TensorPtr<T> mul(const TensorPtr<T>&, const TensorPtr<T>&);                         \
  template TensorPtr<T> neg(const TensorPtr<T>&);                                              \
  template TensorPtr<T> add_scalar(const TensorPtr<T>&, T);                                    \
  template TensorPtr<T> mul_scalar(const TensorPtr<T>&, T);                                    \
  template TensorPtr<T> absolute(const TensorPtr<T>&);                                         \
  template TensorPtr<T> relu(const TensorPtr<T>&);                                             \
  template TensorPtr<T> sigmoid(const TensorPtr<T>&);                                          \
  template TensorPtr<T> tanh(const TensorPtr<T>&);                                             \
  template TensorPtr<T> elu(const TensorPtr<T>&);                                              \
  template TensorPtr<T> reshape(const TensorPtr<T>&, Shape);                                   \
  template TensorPtr<T> transpose(const TensorPtr<T>&, const std::vector<int>&);               \
  template TensorPtr<T> concat(const std::vector<TensorPtr<T>>&, int);                         \
  template std::vector<TensorPtr<T>> split(const TensorPtr<T>&, int, const std::vector<int>&); \
  template TensorPtr<T> matmul(const TensorPtr<T>&, const TensorPtr<T>&);                      \
  template TensorPtr<T> softmax(const TensorPtr<T>&, int);                                     \
  template TensorPtr<T> sum(const TensorPtr<T>&);                                              \
  template TensorPtr<T> mean(const TensorPtr<T>&);                                             \
  template TensorPtr<T> div_rows(const TensorPtr<T>&, const TensorPtr<T>&);                    \
  template TensorPtr<T> conv2d(const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&, \
                               int, int);                                                      \
  template TensorPtr<T> grid_sample_bilinear(const TensorPtr<T>&, const TensorPtr<T>&);        \
  template TensorPtr<T> bilinear_resize(const TensorPtr<T>&, int, int);                        \
  template TensorPtr<T> avgpool2(const TensorPtr<T>&);                                         \
  template TensorPtr<T> convex_upsample(const TensorPtr<T>&, const TensorPtr<T>&, int);        \
  template TensorPtr<T> coordinate_grid<T>(int, int);

STEREO_INSTANTIATE_OPS(float)
STEREO_INSTANTIATE_OPS(double)

}  // namespace stereo
