// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/graph.hpp"

#include "bliss/errors.hpp"

namespace bliss::ad {
namespace {

ParamVector checked(ParamVector g, const char* what) {
  if (auto bad = g.first_non_finite()) {
    throw NumericError(std::string(what) + ": non-finite derivative", *bad);
  }
  return g;
}

Var require_scalar(const Var& out) {
  if (out.value().size() != 1) throw ShapeError("graph builder must return a single element");
  return out;
}

}  // namespace

BoundParams::BoundParams(Tape& tape, const ParamVector& values) : layout_(&values) {
  vars_.reserve(values.num_blocks());
  for (std::size_t i = 0; i < values.num_blocks(); ++i) vars_.push_back(tape.leaf(values.tensor(i)));
}

double ScalarGraph::evaluate(const ParamVector& primary) const {
  Tape tape;
  BoundParams p(tape, primary);
  BoundParams s(tape, secondary_);
  return require_scalar(build(tape, GraphInputs{p, s, false})).value().item();
}

ParamVector to_param_vector(const ParamVector& layout, std::span<const Var> vars) {
  if (vars.size() != layout.num_blocks()) throw ShapeError("to_param_vector: block count mismatch");
  ParamVector out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Tensor& v = vars[i].value();
    out.add(layout.name(i), v.shape() == layout.tensor(i).shape()
                                ? v
                                : v.reshaped(layout.tensor(i).shape()));
  }
  return out;
}

std::pair<double, ParamVector> value_and_grad(const ScalarGraph& graph, const ParamVector& wrt) {
  Tape tape;
  BoundParams p(tape, wrt);
  BoundParams s(tape, graph.secondary());
  const Var out = require_scalar(graph.build(tape, GraphInputs{p, s, false}));
  const auto g = tape.gradient(out, p.vars());
  return {out.value().item(), checked(to_param_vector(wrt, g), "grad")};
}

ParamVector grad(const ScalarGraph& graph, const ParamVector& wrt) {
  return value_and_grad(graph, wrt).second;
}

Var inner_product(std::span<const Var> grads, const ParamVector& z, Tape& tape) {
  if (grads.size() != z.num_blocks()) throw ShapeError("inner_product: block count mismatch");
  Var acc;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Var zi = tape.constant(z.tensor(i).reshaped({grads[i].rows(), grads[i].cols()}));
    const Var term = inner(grads[i], zi);
    acc = acc.valid() ? add(acc, term) : term;
  }
  if (!acc.valid()) acc = tape.constant(Tensor::scalar(0.0));
  return acc;
}

ParamVector hvp(const ScalarGraph& graph, const ParamVector& wrt, const ParamVector& v) {
  require_conformant(wrt, v, "hvp");
  Tape tape;
  BoundParams p(tape, wrt);
  BoundParams s(tape, graph.secondary());
  const Var out = require_scalar(graph.build(tape, GraphInputs{p, s, false}));
  const auto g = tape.gradient(out, p.vars());
  const Var gv = inner_product(g, v, tape);
  return checked(to_param_vector(wrt, tape.gradient(gv, p.vars())), "hvp");
}

HvpOperator::HvpOperator(const ScalarGraph& graph, ParamVector wrt)
    : wrt_(std::move(wrt)), tape_(std::make_unique<Tape>()) {
  BoundParams p(*tape_, wrt_);
  BoundParams s(*tape_, graph.secondary());
  const Var out = require_scalar(graph.build(*tape_, GraphInputs{p, s, false}));
  value_ = out.value().item();
  params_.assign(p.vars().begin(), p.vars().end());
  grads_ = tape_->gradient(out, params_);
  mark_ = tape_->size();
}

ParamVector HvpOperator::gradient() const { return checked(to_param_vector(wrt_, grads_), "grad"); }

ParamVector HvpOperator::apply(const ParamVector& v) {
  require_conformant(wrt_, v, "hvp");
  const Var gv = inner_product(grads_, v, *tape_);
  ParamVector out = to_param_vector(wrt_, tape_->gradient(gv, params_));
  tape_->rewind(mark_);
  return checked(std::move(out), "hvp");
}

ParamVector mixed_vjp(const ScalarGraph& graph, const ParamVector& wrt_outer,
                      const ParamVector& wrt_inner, const ParamVector& z) {
  require_conformant(wrt_inner, z, "mixed_vjp");
  Tape tape;
  BoundParams inner_params(tape, wrt_inner);
  BoundParams outer_params(tape, wrt_outer);
  const Var out = require_scalar(graph.build(tape, GraphInputs{inner_params, outer_params, true}));
  const auto g = tape.gradient(out, inner_params.vars());
  const Var gz = inner_product(g, z, tape);
  return checked(to_param_vector(wrt_outer, tape.gradient(gz, outer_params.vars())), "mixed_vjp");
}

}  // namespace bliss::ad
