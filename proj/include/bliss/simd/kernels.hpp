// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace bliss::simd {

/// Dense row-major kernels used by the autodiff core.
///
/// Every variant must agree with the scalar reference. gemm, axpy and the
/// elementwise kernels accumulate with fused multiply-add in a fixed order and
/// are bit-identical across variants; dot and sum reduce in lanes and agree
/// only to rounding.
struct KernelTable {
  const char* name;

  /// C[m,n] (+)= A[m,k] * B[k,n]. Each output element is a sequential
  /// fma chain over k starting from C (accumulate) or zero.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate);

  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*sub)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
};

const KernelTable& scalar_kernels();
#if defined(BLISS_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif
#if defined(BLISS_HAVE_NEON)
const KernelTable& neon_kernels();
#endif

/// All variants compiled in and supported by the running CPU; scalar first.
std::vector<const KernelTable*> available_kernels();

/// Kernel table chosen once per process. BLISS_SIMD=scalar|avx2|neon|auto
/// overrides the CPU probe.
const KernelTable& active_kernels();

/// Forces a variant for the rest of the process (tests only). Returns false
/// if the variant is not available.
bool select_kernels(std::string_view name);

}  // namespace bliss::simd
