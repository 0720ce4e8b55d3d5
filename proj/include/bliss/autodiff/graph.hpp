// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "bliss/autodiff/ops.hpp"
#include "bliss/autodiff/param_vector.hpp"

namespace bliss::ad {

/// A ParamVector placed on a tape as one leaf per block.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamVector& values);

  const Var& operator[](std::string_view name) const { return vars_[layout_->index_of(name)]; }
  const Var& at(std::size_t i) const { return vars_[i]; }
  std::span<const Var> vars() const noexcept { return vars_; }
  const ParamVector& layout() const noexcept { return *layout_; }

 private:
  const ParamVector* layout_;
  std::vector<Var> vars_;
};

/// What a graph builder sees: the primary parameters (the usual wrt), the
/// secondary ones, and whether the secondary set is being differentiated in
/// this evaluation. Builders may shortcut secondary-only work when it is not.
struct GraphInputs {
  const BoundParams& primary;
  const BoundParams& secondary;
  bool secondary_differentiated = false;
};

/// A scalar function of one or two ParamVectors plus captured constant data.
/// Each evaluation records onto a fresh tape in a fixed op order, so equal
/// inputs give bit-identical results.
class ScalarGraph {
 public:
  using Builder = std::function<Var(Tape&, const GraphInputs&)>;

  explicit ScalarGraph(Builder build, ParamVector secondary = {})
      : build_(std::move(build)), secondary_(std::move(secondary)) {}

  Var build(Tape& tape, const GraphInputs& in) const { return build_(tape, in); }
  const ParamVector& secondary() const noexcept { return secondary_; }

  double evaluate(const ParamVector& primary) const;

 private:
  Builder build_;
  ParamVector secondary_;
};

ParamVector to_param_vector(const ParamVector& layout, std::span<const Var> vars);

/// d(graph)/d(primary), evaluated at wrt with the bound secondary held fixed.
ParamVector grad(const ScalarGraph& graph, const ParamVector& wrt);
std::pair<double, ParamVector> value_and_grad(const ScalarGraph& graph, const ParamVector& wrt);

/// Hessian-vector product by differentiating <grad, v> with v constant.
ParamVector hvp(const ScalarGraph& graph, const ParamVector& wrt, const ParamVector& v);

/// Hessian-vector products at a fixed point. The forward pass and the first
/// gradient are recorded once; each apply() differentiates <grad, v> on the
/// same tape and equals hvp(graph, wrt, v) bit for bit.
class HvpOperator {
 public:
  HvpOperator(const ScalarGraph& graph, ParamVector wrt);

  double value() const noexcept { return value_; }
  ParamVector gradient() const;
  ParamVector apply(const ParamVector& v);

 private:
  ParamVector wrt_;
  std::unique_ptr<Tape> tape_;
  std::vector<Var> params_;
  std::vector<Var> grads_;
  std::size_t mark_ = 0;
  double value_ = 0.0;
};

/// grad_outer <grad_inner graph, z>: the mixed second derivative applied to z.
/// inner is the graph's primary slot, outer its secondary slot.
ParamVector mixed_vjp(const ScalarGraph& graph, const ParamVector& wrt_outer,
                      const ParamVector& wrt_inner, const ParamVector& z);

/// <grads, z> summed over blocks, as a tape scalar.
Var inner_product(std::span<const Var> grads, const ParamVector& z, Tape& tape);

}  // namespace bliss::ad
