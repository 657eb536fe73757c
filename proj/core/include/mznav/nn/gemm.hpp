#pragma once

namespace mznav::nn {

// Row-major C = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k, op(B) is k x n, C is m x n. Dispatches to cblas when built
// with MZNAV_HAVE_CBLAS, otherwise uses a portable loop with a fixed
// k-ascending accumulation order so results are deterministic either way
// (the BLAS path is pinned to a single thread at startup).
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

// Caps BLAS threading at `n` (no-op for the portable backend).
void set_blas_threads(int n);

bool has_blas_backend();

}  // namespace mznav::nn
