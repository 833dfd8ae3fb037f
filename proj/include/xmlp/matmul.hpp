#pragma once

#include <cstddef>
#include <type_traits>

namespace xmlp {

// Number of worker threads used by the float GEMM (and the elementwise ops
// that share the pool). Results are bitwise identical for any thread count:
// threads only partition output rows, every element is reduced serially in
// fixed k-order.
void set_compute_threads(int n);
int compute_threads();

// C[m x n] = op(A)[m x k] * op(B)[k x n], all row-major with leading
// dimensions; accumulate=true adds into C instead of overwriting.
// Cache-blocked, packed, AVX-512/AVX2 micro-kernels.
void gemm_f32(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
              int lda, const float* b, int ldb, float* c, int ldc,
              bool accumulate);

// Reference path for non-float scalar types (the 64-bit gradient-check
// shadow). Small sizes only; correctness over speed.
template <class T>
void gemm_generic(bool trans_a, bool trans_b, int m, int n, int k, const T* a,
                  int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * ldc + j] = T(0);
  }
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const T av = trans_a ? a[static_cast<size_t>(kk) * lda + i]
                           : a[static_cast<size_t>(i) * lda + kk];
      if (trans_b) {
        for (int j = 0; j < n; ++j)
          c[static_cast<size_t>(i) * ldc + j] +=
              av * b[static_cast<size_t>(j) * ldb + kk];
      } else {
        for (int j = 0; j < n; ++j)
          c[static_cast<size_t>(i) * ldc + j] +=
              av * b[static_cast<size_t>(kk) * ldb + j];
      }
    }
  }
}

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda,
          const T* b, int ldb, T* c, int ldc, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    gemm_f32(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    gemm_generic(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

}  // namespace xmlp
