// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bliss/autodiff/tensor.hpp"

namespace bliss::ad {

/// Ordered, uniquely named parameter blocks. Used for model parameters,
/// gradients and the linear-system iterate alike.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a block; throws ShapeError on a duplicate name.
  void add(std::string name, Tensor tensor);

  std::size_t num_blocks() const noexcept { return tensors_.size(); }
  std::size_t num_elements() const noexcept;
  bool empty() const noexcept { return tensors_.empty(); }

  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws ShapeError if absent.
  std::size_t index_of(std::string_view name) const;
  const Tensor& at(std::string_view name) const { return tensors_[index_of(name)]; }
  Tensor& at(std::string_view name) { return tensors_[index_of(name)]; }

  /// Names, order and shapes all match.
  bool conformant(const ParamVector& other) const noexcept;
  ParamVector zeros_like() const;
  /// Name of the first block holding a NaN or Inf, if any.
  std::optional<std::string> first_non_finite() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// Throws ShapeError naming the first mismatch.
void require_conformant(const ParamVector& a, const ParamVector& b, std::string_view what);

/// Block order, then element order.
double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);
/// y + alpha * x
ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y);
void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y);
ParamVector scaled(double alpha, const ParamVector& x);

/// Rounds every element through float, matching what a checkpoint stores.
ParamVector round_to_f32(const ParamVector& x);

}  // namespace bliss::ad
