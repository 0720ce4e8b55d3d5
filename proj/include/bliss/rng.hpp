// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace bliss {

/// mt19937_64 with distribution code of our own, so streams are identical on
/// every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection-sampled.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent seed for a named sub-stream.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = mix(seed ^ 0x9E3779B97F4A7C15ull);
    for (std::uint64_t t : tags) h = mix(h ^ mix(t + 0x632BE59BD9B4E019ull));
    return h;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

/// Stream tags for Rng::derive.
enum class Stream : std::uint64_t {
  corpus_chain = 1,
  corpus_rows,
  validation,
  heldout,
  model_init,
  warmup,
  bilevel_subset,
  bilevel_batches,
  retrain,
  random_scores,
  distill,
  probe,
};

inline std::uint64_t derive(std::uint64_t seed, Stream s, std::uint64_t extra = 0) {
  return Rng::derive(seed, {static_cast<std::uint64_t>(s), extra});
}

}  // namespace bliss
