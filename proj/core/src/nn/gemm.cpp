#include "mznav/nn/gemm.hpp"

#include <cstddef>

#if MZNAV_HAVE_CBLAS
#include <cblas.h>
#endif

namespace mznav::nn {

namespace {

template <typename T>
void gemm_portable(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
                   const T* a, int lda, const T* b, int ldb, T beta, T* c,
                   int ldc) {
  auto at = [&](int r, int col) -> T {
    return trans_a ? a[static_cast<std::size_t>(col) * lda + r]
                   : a[static_cast<std::size_t>(r) * lda + col];
  };
  auto bt = [&](int r, int col) -> T {
    return trans_b ? b[static_cast<std::size_t>(col) * ldb + r]
                   : b[static_cast<std::size_t>(r) * ldb + col];
  };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      T& out = c[static_cast<std::size_t>(i) * ldc + j];
      out = alpha * acc + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

#if MZNAV_HAVE_CBLAS
struct BlasThreadInit {
  BlasThreadInit() { openblas_set_num_threads(1); }
};
BlasThreadInit g_blas_thread_init;
#endif

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
#if MZNAV_HAVE_CBLAS
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
#else
  gemm_portable(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
#endif
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
#if MZNAV_HAVE_CBLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
#else
  gemm_portable(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
#endif
}

void set_blas_threads(int n) {
#if MZNAV_HAVE_CBLAS
  openblas_set_num_threads(n);
#else
  (void)n;
#endif
}

bool has_blas_backend() {
#if MZNAV_HAVE_CBLAS
  return true;
#else
  return false;
#endif
}

}  // namespace mznav::nn
