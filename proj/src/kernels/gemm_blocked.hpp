#pragma once

// GEMM expressed through a vector dot and a vector axpy so that each
// vectorized translation unit instantiates it with its own primitives.
// Included only from ISA-specific .cpp files.

#include <cstddef>

#include "dclone/kernels.hpp"

namespace dclone::kernels::detail {

template <typename Dot, typename Axpy, typename Scale>
inline void gemm_via(Dot dot, Axpy axpy, Scale scal, Trans ta, Trans tb, std::size_t m,
                     std::size_t n, std::size_t k, float alpha, const float* a, std::size_t lda,
                     const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  if (beta != 1.0f) {
    for (std::size_t i = 0; i < m; ++i) {
      if (beta == 0.0f) {
        for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = 0.0f;
      } else {
        scal(beta, c + i * ldc, n);
      }
    }
  }
  if (alpha == 0.0f || k == 0) return;

  if (ta == Trans::kNo && tb == Trans::kNo) {
    for (std::size_t i = 0; i < m; ++i) {
      const float* arow = a + i * lda;
      float* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const float s = alpha * arow[p];
        if (s != 0.0f) axpy(s, b + p * ldb, crow, n);
      }
    }
  } else if (ta == Trans::kNo && tb == Trans::kYes) {
    for (std::size_t i = 0; i < m; ++i) {
      const float* arow = a + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        c[i * ldc + j] += alpha * dot(arow, b + j * ldb, k);
      }
    }
  } else if (ta == Trans::kYes && tb == Trans::kNo) {
    for (std::size_t p = 0; p < k; ++p) {
      const float* arow = a + p * lda;
      const float* brow = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const float s = alpha * arow[i];
        if (s != 0.0f) axpy(s, brow, c + i * ldc, n);
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * lda + i] * b[j * ldb + p];
        c[i * ldc + j] += alpha * acc;
      }
    }
  }
}

}  // namespace dclone::kernels::detail
