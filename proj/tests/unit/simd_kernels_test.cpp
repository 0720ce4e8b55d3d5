// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "bliss/simd/kernels.hpp"

namespace {

using bliss::simd::KernelTable;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

class KernelEquivalence : public ::testing::TestWithParam<const KernelTable*> {};

TEST_P(KernelEquivalence, GemmIsBitIdenticalToScalarReference) {
  const KernelTable& ref = bliss::simd::scalar_kernels();
  const KernelTable& k = *GetParam();
  std::mt19937_64 rng(11);
  // Odd sizes exercise every remainder path of the blocked kernels.
  for (std::size_t m : {1u, 3u, 4u, 7u, 16u}) {
    for (std::size_t n : {1u, 3u, 4u, 5u, 8u, 13u, 64u}) {
      for (std::size_t kk : {1u, 2u, 9u, 32u}) {
        const auto a = random_vec(m * kk, rng);
        const auto b = random_vec(kk * n, rng);
        const auto c0 = random_vec(m * n, rng);
        for (bool acc : {false, true}) {
          auto want = c0;
          auto got = c0;
          ref.gemm(m, n, kk, a.data(), kk, b.data(), n, want.data(), n, acc);
          k.gemm(m, n, kk, a.data(), kk, b.data(), n, got.data(), n, acc);
          ASSERT_TRUE(bit_equal(want, got)) << k.name << " m=" << m << " n=" << n << " k=" << kk;
        }
      }
    }
  }
}

TEST_P(KernelEquivalence, GemmRespectsLeadingDimensions) {
  const KernelTable& ref = bliss::simd::scalar_kernels();
  const KernelTable& k = *GetParam();
  std::mt19937_64 rng(12);
  const std::size_t m = 5, n = 9, kk = 6, lda = 10, ldb = 12, ldc = 11;
  const auto a = random_vec(m * lda, rng);
  const auto b = random_vec(kk * ldb, rng);
  auto want = random_vec(m * ldc, rng);
  auto got = want;
  ref.gemm(m, n, kk, a.data(), lda, b.data(), ldb, want.data(), ldc, false);
  k.gemm(m, n, kk, a.data(), lda, b.data(), ldb, got.data(), ldc, false);
  EXPECT_TRUE(bit_equal(want, got));
}

TEST_P(KernelEquivalence, ElementwiseKernelsAreBitIdentical) {
  const KernelTable& ref = bliss::simd::scalar_kernels();
  const KernelTable& k = *GetParam();
  std::mt19937_64 rng(13);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 17u, 1000u}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    std::vector<double> a(n), b(n);
    ref.add(n, x.data(), y.data(), a.data());
    k.add(n, x.data(), y.data(), b.data());
    EXPECT_TRUE(bit_equal(a, b));
    ref.sub(n, x.data(), y.data(), a.data());
    k.sub(n, x.data(), y.data(), b.data());
    EXPECT_TRUE(bit_equal(a, b));
    ref.mul(n, x.data(), y.data(), a.data());
    k.mul(n, x.data(), y.data(), b.data());
    EXPECT_TRUE(bit_equal(a, b));
    ref.scale(n, -0.37, x.data(), a.data());
    k.scale(n, -0.37, x.data(), b.data());
    EXPECT_TRUE(bit_equal(a, b));
    a = y;
    b = y;
    ref.axpy(n, 1.7, x.data(), a.data());
    k.axpy(n, 1.7, x.data(), b.data());
    EXPECT_TRUE(bit_equal(a, b));
  }
}

TEST_P(KernelEquivalence, ReductionsAgreeToRounding) {
  const KernelTable& ref = bliss::simd::scalar_kernels();
  const KernelTable& k = *GetParam();
  std::mt19937_64 rng(14);
  for (std::size_t n : {0u, 1u, 5u, 8u, 9u, 31u, 4096u}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) abs_sum += std::abs(x[i] * y[i]) + std::abs(x[i]);
    const double tol = 1e-14 * (abs_sum + 1.0);
    EXPECT_NEAR(ref.dot(n, x.data(), y.data()), k.dot(n, x.data(), y.data()), tol);
    EXPECT_NEAR(ref.sum(n, x.data()), k.sum(n, x.data()), tol);
  }
}

TEST_P(KernelEquivalence, ReductionsAreDeterministic) {
  const KernelTable& k = *GetParam();
  std::mt19937_64 rng(15);
  const auto x = random_vec(777, rng);
  const auto y = random_vec(777, rng);
  const double first = k.dot(x.size(), x.data(), y.data());
  for (int rep = 0; rep < 5; ++rep) EXPECT_EQ(first, k.dot(x.size(), x.data(), y.data()));
}

INSTANTIATE_TEST_SUITE_P(AllVariants, KernelEquivalence,
                         ::testing::ValuesIn(bliss::simd::available_kernels()),
                         [](const auto& info) { return std::string(info.param->name); });

TEST(KernelDispatch, ActiveIsOneOfAvailable) {
  const auto all = bliss::simd::available_kernels();
  ASSERT_FALSE(all.empty());
  EXPECT_STREQ(all.front()->name, "scalar");
  bool found = false;
  for (const auto* k : all) found = found || k == &bliss::simd::active_kernels();
  EXPECT_TRUE(found);
  EXPECT_FALSE(bliss::simd::select_kernels("no-such-variant"));
}

}  // namespace
