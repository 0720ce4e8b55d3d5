// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "bliss/autodiff/tensor.hpp"

namespace bliss::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  std::int32_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Writes d(out)/d(input k) into grads[k] for every k with needs[k] set.
/// Implementations must build their results from differentiable ops so that
/// gradients can themselves be differentiated.
using BackwardFn =
    std::function<void(const Var& out, const Var& grad, std::span<const std::uint8_t> needs,
                       std::span<Var> grads)>;

/// Append-only record of a computation. Node ids are a topological order, so
/// a reverse sweep from any node visits its dependencies after it. One tape
/// belongs to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf. Whether it is differentiated is decided per gradient() call.
  Var leaf(Tensor value);
  Var constant(Tensor value) { return leaf(std::move(value)); }

  /// Records an op output. Throws NumericError if value is not finite.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

  const Tensor& value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// d(output)/d(wrt[i]) for a single-element output. The returned Vars live
  /// on this tape and can be differentiated again. Inputs the output does not
  /// depend on get zero gradients.
  std::vector<Var> gradient(const Var& output, std::span<const Var> wrt);

  /// Drops every node recorded after the first `size`. Vars pointing past the
  /// new end become dangling.
  void rewind(std::size_t size);

 private:
  struct Node {
    Tensor value;
    std::vector<std::int32_t> inputs;
    BackwardFn backward;
    const char* op = "leaf";
  };
  std::deque<Node> nodes_;
};

}  // namespace bliss::ad
