// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include "bliss/errors.hpp"

namespace bliss::ad {

std::size_t element_count(const std::vector<std::size_t>& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (element_count(shape_) != values_.size()) {
    throw ShapeError("tensor shape holds " + std::to_string(element_count(shape_)) +
                     " elements but " + std::to_string(values_.size()) + " values given");
  }
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() < 2) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on tensor with " + std::to_string(values_.size()) + " elements");
  }
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  // A double is NaN or infinite iff its exponent bits are all set.
  constexpr std::uint64_t kExp = 0x7FF0000000000000ull;
  std::uint64_t bad = 0;
  for (double v : values_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & kExp) == kExp);
  return bad == 0;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), values_);
}

}  // namespace bliss::ad
