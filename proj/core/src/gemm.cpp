#include "gemm.hpp"

#include <cstring>
#include <mutex>
#include <vector>

#ifdef STEREO_USE_CBLAS
#include <cblas.h>

extern "C" void openblas_set_num_threads(int);
#endif

namespace stereo::detail {

#ifdef STEREO_USE_CBLAS

namespace {
// Deterministic results require a fixed reduction order, so the BLAS backend
// is pinned to one thread.
std::once_flag g_blas_init;
void init_blas() {
  std::call_once(g_blas_init, [] { openblas_set_num_threads(1); });
}
}  // namespace

void gemm(int m, int n, int k, const float* a, bool trans_a, const float* b, bool trans_b,
          float* c, bool accumulate) {
  init_blas();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, trans_a ? m : k, b,
              trans_b ? k : n, accumulate ? 1.0f : 0.0f, c, n);
}

void gemm(int m, int n, int k, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, bool accumulate) {
  init_blas();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, trans_a ? m : k, b,
              trans_b ? k : n, accumulate ? 1.0 : 0.0, c, n);
}

#else

namespace {

// Portable fallback: materialize transposes, then an ikj loop that the
// compiler can vectorize over the contiguous j dimension.
template <typename T>
void gemm_impl(int m, int n, int k, const T* a, bool trans_a, const T* b, bool trans_b, T* c,
               bool accumulate) {
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf.resize(static_cast<size_t>(m) * k);
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) a_buf[static_cast<size_t>(i) * k + p] = a[static_cast<size_t>(p) * m + i];
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(static_cast<size_t>(k) * n);
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) b_buf[static_cast<size_t>(p) * n + j] = b[static_cast<size_t>(j) * k + p];
    b = b_buf.data();
  }
  if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<size_t>(i) * n;
    const T* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void gemm(int m, int n, int k, const float* a, bool trans_a, const float* b, bool trans_b,
          float* c, bool accumulate) {
  gemm_impl(m, n, k, a, trans_a, b, trans_b, c, accumulate);
}

void gemm(int m, int n, int k, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, bool accumulate) {
  gemm_impl(m, n, k, a, trans_a, b, trans_b, c, accumulate);
}

#endif

}  // namespace stereo::detail
