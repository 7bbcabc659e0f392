#pragma once

#include <cblas.h>

#include <cstdint>

#if defined(__GNUC__)
// Resolves when the linked BLAS is OpenBLAS; null otherwise.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));
#endif

namespace glyphnet {

enum class Trans { N, T };

namespace detail {

// Keep BLAS on one thread: batch items are already parallelized above the
// GEMM calls, and a fixed thread count keeps results reproducible run to run.
inline const bool blas_pinned = [] {
#if defined(__GNUC__)
  if (openblas_set_num_threads) openblas_set_num_threads(1);
#endif
  return true;
}();

}  // namespace detail

/// C(M,N) = alpha * op(A) * op(B) + beta * C, all row-major.
///
/// The double path runs hand-ordered loops in which every output element
/// accumulates its K products in ascending-k order — exactly the summation
/// order of a straightforward nested-loop reference, so results compare
/// bit-for-bit against such a reference. The float path delegates to BLAS
/// for speed; training runs in float, verification in double.
inline void gemm(Trans ta, Trans tb, int M, int N, int K, float alpha, const float* A,
                 int lda, const float* B, int ldb, float beta, float* C, int ldc) {
  (void)detail::blas_pinned;
  cblas_sgemm(CblasRowMajor, ta == Trans::N ? CblasNoTrans : CblasTrans,
              tb == Trans::N ? CblasNoTrans : CblasTrans, M, N, K, alpha, A, lda, B, ldb,
              beta, C, ldc);
}

inline void gemm(Trans ta, Trans tb, int M, int N, int K, double alpha, const double* A,
                 int lda, const double* B, int ldb, double beta, double* C, int ldc) {
  // Scale / clear the destination first, then accumulate products in
  // ascending-k order per element.
  for (int i = 0; i < M; ++i) {
    double* crow = C + static_cast<std::int64_t>(i) * ldc;
    if (beta == 0.0) {
      for (int j = 0; j < N; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (int j = 0; j < N; ++j) crow[j] *= beta;
    }
  }
  if (ta == Trans::N && tb == Trans::N) {
    for (int i = 0; i < M; ++i) {
      const double* arow = A + static_cast<std::int64_t>(i) * lda;
      double* crow = C + static_cast<std::int64_t>(i) * ldc;
      for (int k = 0; k < K; ++k) {
        const double a = alpha * arow[k];
        const double* brow = B + static_cast<std::int64_t>(k) * ldb;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else if (ta == Trans::T && tb == Trans::N) {
    // A is (K, M): k is the outer loop, so each C element still sees k ascending.
    for (int k = 0; k < K; ++k) {
      const double* arow = A + static_cast<std::int64_t>(k) * lda;
      const double* brow = B + static_cast<std::int64_t>(k) * ldb;
      for (int i = 0; i < M; ++i) {
        const double a = alpha * arow[i];
        double* crow = C + static_cast<std::int64_t>(i) * ldc;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else if (ta == Trans::N && tb == Trans::T) {
    // B is (N, K): plain dot products, k ascending inside.
    for (int i = 0; i < M; ++i) {
      const double* arow = A + static_cast<std::int64_t>(i) * lda;
      double* crow = C + static_cast<std::int64_t>(i) * ldc;
      for (int j = 0; j < N; ++j) {
        const double* brow = B + static_cast<std::int64_t>(j) * ldb;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += alpha * arow[k] * brow[k];
        crow[j] += acc;
      }
    }
  } else {  // T, T
    for (int i = 0; i < M; ++i) {
      double* crow = C + static_cast<std::int64_t>(i) * ldc;
      for (int j = 0; j < N; ++j) {
        const double* brow = B + static_cast<std::int64_t>(j) * ldb;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += alpha * A[static_cast<std::int64_t>(k) * lda + i] * brow[k];
        crow[j] += acc;
      }
    }
  }
}

}  // namespace glyphnet
