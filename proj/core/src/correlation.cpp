#include "stereo/correlation.hpp"

#include <cmath>

namespace stereo {

CorrMode schedule_mode(CorrSchedule schedule, int iteration) {
  switch (schedule) {
    case CorrSchedule::OneDOnly:
      return CorrMode::OneD;
    case CorrSchedule::TwoDOnly:
      return CorrMode::TwoD;
    case CorrSchedule::Alternate:
      break;
  }
  return iteration % 2 == 0 ? CorrMode::TwoD : CorrMode::OneD;
}

namespace {

// Window displacement of correlation pair d: a scan-line span in 1-D mode, a
// k x k dilated grid (k^2 = 2r+1) in 2-D mode.
struct Window {
  int d_count = 0;
  std::vector<int> fx, fy;
};

Window make_window(CorrMode mode, int radius, int dilation) {
  Window win;
  win.d_count = 2 * radius + 1;
  win.fx.resize(static_cast<size_t>(win.d_count));
  win.fy.resize(static_cast<size_t>(win.d_count));
  if (mode == CorrMode::OneD) {
    for (int d = 0; d < win.d_count; ++d) {
      win.fx[static_cast<size_t>(d)] = d - radius;
      win.fy[static_cast<size_t>(d)] = 0;
    }
  } else {
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(win.d_count))));
    if (k * k != win.d_count)
      throw ConfigError("2-D correlation needs 2r+1 to be a perfect square");
    for (int d = 0; d < win.d_count; ++d) {
      win.fx[static_cast<size_t>(d)] = ((d % k) - (k - 1) / 2) * dilation;
      win.fy[static_cast<size_t>(d)] = ((d / k) - (k - 1) / 2) * dilation;
    }
  }
  return win;
}

// Per-pixel bilinear taps for one correlation pair.
template <typename T>
struct SampleMeta {
  std::vector<int64_t> i00, i01, i10, i11;  // -1 when out of bounds
  std::vector<T> w00, w01, w10, w11;
  std::vector<T> tx, ty;
  void resize(int64_t n) {
    i00.resize(n); i01.resize(n); i10.resize(n); i11.resize(n);
    w00.resize(n); w01.resize(n); w10.resize(n); w11.resize(n);
    tx.resize(n); ty.resize(n);
  }
};

template <typename T>
void fill_sample_meta(int h, int w, int fx, int fy, const T* offx, const T* offy,
                      SampleMeta<T>& meta) {
  const int64_t plane = static_cast<int64_t>(h) * w;
  meta.resize(plane);
  int64_t p = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x, ++p) {
      const T sx = static_cast<T>(x + fx) + (offx ? offx[p] : T(0));
      const T sy = static_cast<T>(y + fy) + (offy ? offy[p] : T(0));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const T tx = sx - static_cast<T>(x0), ty = sy - static_cast<T>(y0);
      meta.tx[p] = tx;
      meta.ty[p] = ty;
      const bool y0_in = y0 >= 0 && y0 < h, y1_in = y0 + 1 >= 0 && y0 + 1 < h;
      const bool x0_in = x0 >= 0 && x0 < w, x1_in = x0 + 1 >= 0 && x0 + 1 < w;
      meta.i00[p] = (x0_in && y0_in) ? static_cast<int64_t>(y0) * w + x0 : -1;
      meta.i01[p] = (x1_in && y0_in) ? static_cast<int64_t>(y0) * w + x0 + 1 : -1;
      meta.i10[p] = (x0_in && y1_in) ? static_cast<int64_t>(y0 + 1) * w + x0 : -1;
      meta.i11[p] = (x1_in && y1_in) ? static_cast<int64_t>(y0 + 1) * w + x0 + 1 : -1;
      meta.w00[p] = (T(1) - tx) * (T(1) - ty);
      meta.w01[p] = tx * (T(1) - ty);
      meta.w10[p] = (T(1) - tx) * ty;
      meta.w11[p] = tx * ty;
    }
}

template <typename T>
inline T sample_with_meta(const T* plane, const SampleMeta<T>& meta, int64_t p) {
  T v = T(0);
  if (meta.i00[p] >= 0) v += meta.w00[p] * plane[meta.i00[p]];
  if (meta.i01[p] >= 0) v += meta.w01[p] * plane[meta.i01[p]];
  if (meta.i10[p] >= 0) v += meta.w10[p] * plane[meta.i10[p]];
  if (meta.i11[p] >= 0) v += meta.w11[p] * plane[meta.i11[p]];
  return v;
}

}  // namespace

template <typename T>
TensorPtr<T> local_correlation(const TensorPtr<T>& f1, const TensorPtr<T>& f2,
                               const TensorPtr<T>& offsets, CorrMode mode, int radius,
                               int dilation, int groups) {
  if (f1->shape != f2->shape || f1->ndim() != 3)
    throw ShapeError("local_correlation: feature maps must match, C x H x W");
  const int c = f1->dim(0), h = f1->dim(1), w = f1->dim(2);
  if (groups < 1 || c % groups != 0)
    throw ConfigError("local_correlation: channels not divisible by groups");
  const Window win = make_window(mode, radius, dilation);
  const int d_count = win.d_count;
  if (offsets) {
    if (offsets->ndim() != 4 || offsets->dim(0) != 2 || offsets->dim(1) != d_count ||
        offsets->dim(2) != h || offsets->dim(3) != w)
      throw ShapeError("local_correlation: offsets must be 2 x D x H x W");
  }
  const int cg = c / groups;
  const T inv_cg = T(1) / static_cast<T>(cg);
  const int64_t plane = static_cast<int64_t>(h) * w;

  auto out = Tensor<T>::zeros({groups * d_count, h, w});
  SampleMeta<T> meta;
  std::vector<T> acc(static_cast<size_t>(plane));
  for (int d = 0; d < d_count; ++d) {
    const T* offx = offsets ? offsets->data.data() + static_cast<int64_t>(d) * plane : nullptr;
    const T* offy = offsets
                        ? offsets->data.data() + (static_cast<int64_t>(d_count) + d) * plane
                        : nullptr;
    fill_sample_meta(h, w, win.fx[static_cast<size_t>(d)], win.fy[static_cast<size_t>(d)], offx,
                     offy, meta);
    for (int g = 0; g < groups; ++g) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const T* f1p = f1->data.data() + static_cast<int64_t>(ch) * plane;
        const T* f2p = f2->data.data() + static_cast<int64_t>(ch) * plane;
        for (int64_t p = 0; p < plane; ++p)
          acc[static_cast<size_t>(p)] += f1p[p] * sample_with_meta(f2p, meta, p);
      }
      T* dst = out->data.data() + (static_cast<int64_t>(g) * d_count + d) * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p] = acc[static_cast<size_t>(p)] * inv_cg;
    }
  }

  const bool has_offsets = offsets != nullptr;
  const bool track = grad_enabled() &&
                     (f1->tracked() || f2->tracked() || (has_offsets && offsets->tracked()));
  if (track) {
    if (has_offsets)
      out->parents = {f1, f2, offsets};
    else
      out->parents = {f1, f2};
    Tensor<T>* o = out.get();
    out->backward_fn = [o, f1, f2, offsets, win, groups, cg, inv_cg, plane, h, w, has_offsets] {
      T* gf1 = f1->grad_acc();
      T* gf2 = f2->grad_acc();
      T* goff = has_offsets ? offsets->grad_acc() : nullptr;
      const int d_count = win.d_count;
      SampleMeta<T> meta;
      std::vector<T> dsx(static_cast<size_t>(plane)), dsy(static_cast<size_t>(plane));
      for (int d = 0; d < d_count; ++d) {
        const T* offx =
            has_offsets ? offsets->data.data() + static_cast<int64_t>(d) * plane : nullptr;
        const T* offy = has_offsets
                            ? offsets->data.data() + (static_cast<int64_t>(d_count) + d) * plane
                            : nullptr;
        fill_sample_meta(h, w, win.fx[static_cast<size_t>(d)], win.fy[static_cast<size_t>(d)],
                         offx, offy, meta);
        std::fill(dsx.begin(), dsx.end(), T(0));
        std::fill(dsy.begin(), dsy.end(), T(0));
        for (int g = 0; g < groups; ++g) {
          const T* go = o->grad.data() + (static_cast<int64_t>(g) * d_count + d) * plane;
          for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
            const T* f1p = f1->data.data() + static_cast<int64_t>(ch) * plane;
            const T* f2p = f2->data.data() + static_cast<int64_t>(ch) * plane;
            T* gf1p = gf1 ? gf1 + static_cast<int64_t>(ch) * plane : nullptr;
            T* gf2p = gf2 ? gf2 + static_cast<int64_t>(ch) * plane : nullptr;
            for (int64_t p = 0; p < plane; ++p) {
              const T common = go[p] * inv_cg;
              if (common == T(0)) continue;
              if (gf1p) gf1p[p] += common * sample_with_meta(f2p, meta, p);
              const T scale = common * f1p[p];
              const T f00 = meta.i00[p] >= 0 ? f2p[meta.i00[p]] : T(0);
              const T f01 = meta.i01[p] >= 0 ? f2p[meta.i01[p]] : T(0);
              const T f10 = meta.i10[p] >= 0 ? f2p[meta.i10[p]] : T(0);
              const T f11 = meta.i11[p] >= 0 ? f2p[meta.i11[p]] : T(0);
              if (gf2p) {
                if (meta.i00[p] >= 0) gf2p[meta.i00[p]] += scale * meta.w00[p];
                if (meta.i01[p] >= 0) gf2p[meta.i01[p]] += scale * meta.w01[p];
                if (meta.i10[p] >= 0) gf2p[meta.i10[p]] += scale * meta.w10[p];
                if (meta.i11[p] >= 0) gf2p[meta.i11[p]] += scale * meta.w11[p];
              }
              if (goff) {
                const T ty = meta.ty[p], tx = meta.tx[p];
                dsx[static_cast<size_t>(p)] +=
                    scale * ((T(1) - ty) * (f01 - f00) + ty * (f11 - f10));
                dsy[static_cast<size_t>(p)] +=
                    scale * ((T(1) - tx) * (f10 - f00) + tx * (f11 - f01));
              }
            }
          }
        }
        if (goff) {
          T* gx = goff + static_cast<int64_t>(d) * plane;
          T* gy = goff + (static_cast<int64_t>(d_count) + d) * plane;
          for (int64_t p = 0; p < plane; ++p) {
            gx[p] += dsx[static_cast<size_t>(p)];
            gy[p] += dsy[static_cast<size_t>(p)];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorPtr<T> allpairs_correlation_1d(const TensorPtr<T>& f1, const TensorPtr<T>& f2, int groups,
                                     int64_t budget_scalars) {
  if (f1->shape != f2->shape || f1->ndim() != 3)
    throw ShapeError("allpairs_correlation_1d: feature maps must match");
  const int c = f1->dim(0), h = f1->dim(1), w = f1->dim(2);
  if (groups < 1 || c % groups != 0)
    throw ConfigError("allpairs_correlation_1d: channels not divisible by groups");
  const int64_t scalars = static_cast<int64_t>(groups) * w * h * w;
  if (scalars > budget_scalars)
    throw ResourceError("allpairs_correlation_1d: volume exceeds memory budget");
  const int cg = c / groups;
  const T inv_cg = T(1) / static_cast<T>(cg);
  const int64_t plane = static_cast<int64_t>(h) * w;

  auto out = Tensor<T>::zeros({groups * w, h, w});
  for (int g = 0; g < groups; ++g)
    for (int xr = 0; xr < w; ++xr) {
      T* dst = out->data.data() + (static_cast<int64_t>(g) * w + xr) * plane;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const T* f1p = f1->data.data() + static_cast<int64_t>(ch) * plane;
        const T* f2p = f2->data.data() + static_cast<int64_t>(ch) * plane;
        for (int y = 0; y < h; ++y) {
          const T f2v = f2p[static_cast<int64_t>(y) * w + xr];
          for (int x = 0; x < w; ++x)
            dst[static_cast<int64_t>(y) * w + x] += f1p[static_cast<int64_t>(y) * w + x] * f2v;
        }
      }
      for (int64_t p = 0; p < plane; ++p) dst[p] *= inv_cg;
    }
  return out;
}

template <typename T>
TensorPtr<T> allpairs_correlation_2d(const TensorPtr<T>& f1, const TensorPtr<T>& f2, int groups,
                                     int64_t budget_scalars) {
  if (f1->shape != f2->shape || f1->ndim() != 3)
    throw ShapeError("allpairs_correlation_2d: feature maps must match");
  const int c = f1->dim(0), h = f1->dim(1), w = f1->dim(2);
  if (groups < 1 || c % groups != 0)
    throw ConfigError("allpairs_correlation_2d: channels not divisible by groups");
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t scalars = static_cast<int64_t>(groups) * plane * plane;
  if (scalars > budget_scalars)
    throw ResourceError("allpairs_correlation_2d: volume exceeds memory budget");
  const int cg = c / groups;
  const T inv_cg = T(1) / static_cast<T>(cg);

  auto out = Tensor<T>::zeros({static_cast<int>(groups * plane), h, w});
  for (int g = 0; g < groups; ++g)
    for (int64_t pr = 0; pr < plane; ++pr) {
      T* dst = out->data.data() + (static_cast<int64_t>(g) * plane + pr) * plane;
      for (int ch = g * cg; ch < (g + 1) * cg; ++ch) {
        const T* f1p = f1->data.data() + static_cast<int64_t>(ch) * plane;
        const T f2v = f2->data[static_cast<int64_t>(ch) * plane + pr];
        for (int64_t p = 0; p < plane; ++p) dst[p] += f1p[p] * f2v;
      }
      for (int64_t p = 0; p < plane; ++p) dst[p] *= inv_cg;
    }
  return out;
}

template <typename T>
TensorPtr<T> allpairs_lookup_1d(const TensorPtr<T>& volume, const TensorPtr<T>& disp, int radius,
                                int groups) {
  if (volume->ndim() != 3 || disp->ndim() != 3 || disp->dim(0) != 1)
    throw ShapeError("allpairs_lookup_1d: bad inputs");
  const int h = volume->dim(1), w = volume->dim(2);
  if (volume->dim(0) != groups * w) throw ShapeError("allpairs_lookup_1d: bad volume layout");
  const int d_count = 2 * radius + 1;
  const int64_t plane = static_cast<int64_t>(h) * w;
  auto out = Tensor<T>::zeros({groups * d_count, h, w});
  for (int d = 0; d < d_count; ++d) {
    const int f = d - radius;
    for (int g = 0; g < groups; ++g) {
      T* dst = out->data.data() + (static_cast<int64_t>(g) * d_count + d) * plane;
      int64_t p = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++p) {
          const T xr = static_cast<T>(x + f) - disp->data[p];
          const int x0 = static_cast<int>(std::floor(xr));
          const T t = xr - static_cast<T>(x0);
          T v = T(0);
          if (x0 >= 0 && x0 < w)
            v += (T(1) - t) *
                 volume->data[(static_cast<int64_t>(g) * w + x0) * plane + p];
          if (x0 + 1 >= 0 && x0 + 1 < w)
            v += t * volume->data[(static_cast<int64_t>(g) * w + x0 + 1) * plane + p];
          dst[p] = v;
        }
    }
  }
  return out;
}

template <typename T>
TensorPtr<T> allpairs_lookup_2d(const TensorPtr<T>& volume, const TensorPtr<T>& disp, int radius,
                                int dilation, int groups) {
  if (volume->ndim() != 3 || disp->ndim() != 3 || disp->dim(0) != 1)
    throw ShapeError("allpairs_lookup_2d: bad inputs");
  const int h = volume->dim(1), w = volume->dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  if (volume->dim(0) != static_cast<int>(groups * plane))
    throw ShapeError("allpairs_lookup_2d: bad volume layout");
  const Window win = make_window(CorrMode::TwoD, radius, dilation);
  auto out = Tensor<T>::zeros({groups * win.d_count, h, w});
  for (int d = 0; d < win.d_count; ++d)
    for (int g = 0; g < groups; ++g) {
      T* dst = out->data.data() + (static_cast<int64_t>(g) * win.d_count + d) * plane;
      int64_t p = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++p) {
          const int yr = y + win.fy[static_cast<size_t>(d)];
          if (yr < 0 || yr >= h) {
            dst[p] = T(0);
            continue;
          }
          const T xr = static_cast<T>(x + win.fx[static_cast<size_t>(d)]) - disp->data[p];
          const int x0 = static_cast<int>(std::floor(xr));
          const T t = xr - static_cast<T>(x0);
          T v = T(0);
          if (x0 >= 0 && x0 < w)
            v += (T(1) - t) * volume->data[(static_cast<int64_t>(g) * plane +
                                            static_cast<int64_t>(yr) * w + x0) *
                                               plane +
                                           p];
          if (x0 + 1 >= 0 && x0 + 1 < w)
            v += t * volume->data[(static_cast<int64_t>(g) * plane +
                                   static_cast<int64_t>(yr) * w + x0 + 1) *
                                      plane +
                                  p];
          dst[p] = v;
        }
    }
  return out;
}

int64_t local_volume_scalars_per_pixel(int radius, int groups) {
  return static_cast<int64_t>(2 * radius + 1) * groups;
}

int64_t allpairs_volume_scalars_per_pixel(CorrMode mode, int h, int w, int groups) {
  return mode == CorrMode::OneD ? static_cast<int64_t>(w) * groups
                                : static_cast<int64_t>(h) * w * groups;
}

template <typename T>
TensorPtr<T> warp_by_disparity(const TensorPtr<T>& feat, const TensorPtr<T>& disp) {
  if (feat->ndim() != 3 || disp->ndim() != 3 || disp->dim(0) != 1 ||
      disp->dim(1) != feat->dim(1) || disp->dim(2) != feat->dim(2))
    throw ShapeError("warp_by_disparity: disparity must be 1 x H x W matching the features");
  const int h = feat->dim(1), w = feat->dim(2);
  auto grid = coordinate_grid<T>(h, w);
  auto planes = split(grid, 0, {1, 1});
  auto coords = concat<T>({sub(planes[0], disp), planes[1]}, 0);
  return grid_sample_bilinear(feat, coords);
}

#define STEREO_INSTANTIATE_CORR(T)                                                             \
  template TensorPtr<T> local_correlation(const TensorPtr<T>&, const TensorPtr<T>&,            \
                                          const TensorPtr<T>&, CorrMode, int, int, int);       \
  template TensorPtr<T> allpairs_correlation_1d(const TensorPtr<T>&, const TensorPtr<T>&, int, \
                                                int64_t);                                      \
  template TensorPtr<T> allpairs_correlation_2d(const TensorPtr<T>&, const TensorPtr<T>&, int, \
                                                int64_t);                                      \
  template TensorPtr<T> allpairs_lookup_1d(const TensorPtr<T>&, const TensorPtr<T>&, int, int);\
  template TensorPtr<T> allpairs_lookup_2d(const TensorPtr<T>&, const TensorPtr<T>&, int, int, \
                                           int);                                               \
  template TensorPtr<T> warp_by_disparity(const TensorPtr<T>&, const TensorPtr<T>&);

STEREO_INSTANTIATE_CORR(float)
STEREO_INSTANTIATE_CORR(double)

}  // namespace stereo
