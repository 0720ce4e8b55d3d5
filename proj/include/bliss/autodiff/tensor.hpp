// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bliss::ad {

/// Dense row-major array of doubles. Ops in this library only use rank <= 2;
/// rank 0 is a scalar and rank 1 of length n is viewed as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  /// Same values, new shape; the element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t element_count(const std::vector<std::size_t>& shape) noexcept;

}  // namespace bliss::ad
