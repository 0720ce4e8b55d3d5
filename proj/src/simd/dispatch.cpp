// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "bliss/simd/kernels.hpp"

namespace bliss::simd {
namespace {

bool cpu_has_avx2() {
#if defined(BLISS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* find(std::string_view name) {
  for (const KernelTable* t : available_kernels()) {
    if (name == t->name) return t;
  }
  return nullptr;
}

const KernelTable* probe() {
  const char* env = std::getenv("BLISS_SIMD");
  if (env != nullptr && std::string_view(env) != "auto" && *env != '\0') {
    if (const KernelTable* t = find(env)) return t;
  }
  // Best available is last.
  return available_kernels().back();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> active{probe()};
  return active;
}

}  // namespace

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
#if defined(BLISS_HAVE_AVX2)
  if (cpu_has_avx2()) out.push_back(&avx2_kernels());
#endif
#if defined(BLISS_HAVE_NEON)
  out.push_back(&neon_kernels());
#endif
  return out;
}

const KernelTable& active_kernels() { return *slot().load(std::memory_order_relaxed); }

bool select_kernels(std::string_view name) {
  const KernelTable* t = find(name);
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace bliss::simd
