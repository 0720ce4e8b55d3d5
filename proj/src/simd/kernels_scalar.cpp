// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/simd/kernels.hpp"

#include <cmath>

namespace bliss::simd {
namespace {

void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const double* a,
              std::size_t lda, const double* b, std::size_t ldb, double* c,
              std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(aip, brow[j], crow[j]);
    }
  }
}

double dot_ref(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

double sum_ref(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_ref(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_ref(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void add_ref(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_ref(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_ref(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", gemm_ref, dot_ref, sum_ref, axpy_ref,
                                 scale_ref, add_ref,  sub_ref, mul_ref};
  return table;
}

}  // namespace bliss::simd
