// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/tape.hpp"

#include <string>

#include "bliss/autodiff/ops.hpp"
#include "bliss/errors.hpp"

namespace bliss::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, "leaf"});
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output of op '") + op + "'", "");
  }
  Node node{std::move(value), {}, std::move(backward), op};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) node.inputs.push_back(v.id());
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Tape::rewind(std::size_t size) {
  if (size > nodes_.size()) throw ShapeError("rewind past the end of the tape");
  nodes_.resize(size);
}

std::vector<Var> Tape::gradient(const Var& output, std::span<const Var> wrt) {
  if (output.value().size() != 1) {
    throw ShapeError("gradient() needs a single-element output, got " +
                     std::to_string(output.value().size()) + " elements");
  }
  const auto top = static_cast<std::size_t>(output.id());

  // Nodes on a path from some wrt leaf.
  std::vector<char> relevant(top + 1, 0);
  for (const Var& w : wrt) {
    if (static_cast<std::size_t>(w.id()) <= top) relevant[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::size_t id = 0; id <= top; ++id) {
    if (relevant[id]) continue;
    for (std::int32_t in : nodes_[id].inputs) {
      if (relevant[static_cast<std::size_t>(in)]) {
        relevant[id] = 1;
        break;
      }
    }
  }

  std::vector<Var> grads(top + 1);
  if (relevant[top]) {
    grads[top] = constant(Tensor(output.value().shape(), 1.0));
  }
  std::vector<std::uint8_t> needs_storage;
  std::vector<Var> in_grads;
  for (std::size_t id = top + 1; id-- > 0;) {
    if (!grads[id].valid() || !relevant[id]) continue;
    // Recording new nodes grows the deque without moving existing ones.
    const Node& node = nodes_[id];
    if (!node.backward) continue;
    const std::size_t n_in = node.inputs.size();
    needs_storage.assign(n_in, 0);
    bool any = false;
    for (std::size_t k = 0; k < n_in; ++k) {
      needs_storage[k] = relevant[static_cast<std::size_t>(node.inputs[k])];
      any = any || needs_storage[k];
    }
    if (!any) continue;
    in_grads.assign(n_in, Var());
    node.backward(Var(this, static_cast<std::int32_t>(id)), grads[id],
                  std::span<const std::uint8_t>(needs_storage), std::span<Var>(in_grads));
    for (std::size_t k = 0; k < n_in; ++k) {
      if (!needs_storage[k] || !in_grads[k].valid()) continue;
      auto& slot = grads[static_cast<std::size_t>(node.inputs[k])];
      slot = slot.valid() ? add(slot, in_grads[k]) : in_grads[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto wid = static_cast<std::size_t>(w.id());
    Var g = (wid <= top) ? grads[wid] : Var();
    if (!g.valid()) {
      out.push_back(constant(Tensor(w.value().shape(), 0.0)));
    } else if (g.value().shape() != w.value().shape()) {
      out.push_back(reshape(g, w.value().shape()));
    } else {
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace bliss::ad
