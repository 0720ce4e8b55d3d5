// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "bliss/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace bliss::simd {
namespace {

// Rows [i0, i0+R) x columns [j0, j0+8).
template <int R>
inline void gemm_block8(std::size_t k, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double* c,
                        std::size_t ldc, bool accumulate) {
  __m256d lo[R];
  __m256d hi[R];
  for (int r = 0; r < R; ++r) {
    if (accumulate) {
      lo[r] = _mm256_loadu_pd(c + r * ldc);
      hi[r] = _mm256_loadu_pd(c + r * ldc + 4);
    } else {
      lo[r] = _mm256_setzero_pd();
      hi[r] = _mm256_setzero_pd();
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_pd(c + r * ldc, lo[r]);
    _mm256_storeu_pd(c + r * ldc + 4, hi[r]);
  }
}

template <int R>
inline void gemm_block4(std::size_t k, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double* c,
                        std::size_t ldc, bool accumulate) {
  __m256d acc[R];
  for (int r = 0; r < R; ++r) {
    acc[r] = accumulate ? _mm256_loadu_pd(c + r * ldc) : _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    for (int r = 0; r < R; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + r * ldc, acc[r]);
}

template <int R>
inline void gemm_rows(std::size_t n, std::size_t k, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) gemm_block8<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  for (; j + 4 <= n; j += 4) gemm_block4<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      double acc = accumulate ? c[r * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * lda + p], b[p * ldb + j], acc);
      c[r * ldc + j] = acc;
    }
  }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    gemm_rows<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
  }
  for (; i < m; ++i) {
    gemm_rows<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(_mm256_loadu_pd(x + i), a0);
    a1 = _mm256_add_pd(_mm256_loadu_pd(x + i + 4), a1);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_avx2(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void add_avx2(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_avx2(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{"avx2",     gemm_avx2, dot_avx2, sum_avx2, axpy_avx2,
                                 scale_avx2, add_avx2,  sub_avx2, mul_avx2};
  return table;
}

}  // namespace bliss::simd
