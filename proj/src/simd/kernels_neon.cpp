// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

// AArch64 only. Same accumulation contract as the AVX2 table.

#include "bliss/simd/kernels.hpp"

#include <arm_neon.h>

#include <cmath>

namespace bliss::simd {
namespace {

void gemm_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      float64x2_t lo = accumulate ? vld1q_f64(crow + j) : vdupq_n_f64(0.0);
      float64x2_t hi = accumulate ? vld1q_f64(crow + j + 2) : vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(a[i * lda + p]);
        lo = vfmaq_f64(lo, av, vld1q_f64(b + p * ldb + j));
        hi = vfmaq_f64(hi, av, vld1q_f64(b + p * ldb + j + 2));
      }
      vst1q_f64(crow + j, lo);
      vst1q_f64(crow + j + 2, hi);
    }
    for (; j < n; ++j) {
      double acc = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * lda + p], b[p * ldb + j], acc);
      crow[j] = acc;
    }
  }
}

double dot_neon(std::size_t n, const double* x, const double* y) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc2 = vfmaq_f64(acc2, vld1q_f64(x + i), vld1q_f64(y + i));
  double acc = vaddvq_f64(acc2);
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

double sum_neon(std::size_t n, const double* x) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc2 = vaddq_f64(acc2, vld1q_f64(x + i));
  double acc = vaddvq_f64(acc2);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_neon(std::size_t n, double alpha, const double* x, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void add_neon(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_neon(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_neon(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable& neon_kernels() {
  static const KernelTable table{"neon",     gemm_neon, dot_neon, sum_neon, axpy_neon,
                                 scale_neon, add_neon,  sub_neon, mul_neon};
  return table;
}

}  // namespace bliss::simd
