// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/param_vector.hpp"

#include <cmath>

#include "bliss/errors.hpp"
#include "bliss/simd/kernels.hpp"

namespace bliss::ad {

void ParamVector::add(std::string name, Tensor tensor) {
  if (find(name)) throw ShapeError("duplicate parameter block '" + name + "'");
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(tensor));
}

std::size_t ParamVector::num_elements() const noexcept {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

std::optional<std::size_t> ParamVector::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamVector::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ShapeError("no parameter block named '" + std::string(name) + "'");
}

bool ParamVector::conformant(const ParamVector& other) const noexcept {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
  }
  return true;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    out.add(names_[i], Tensor(tensors_[i].shape(), 0.0));
  }
  return out;
}

std::optional<std::string> ParamVector::first_non_finite() const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].all_finite()) return names_[i];
  }
  return std::nullopt;
}

void require_conformant(const ParamVector& a, const ParamVector& b, std::string_view what) {
  if (a.num_blocks() != b.num_blocks()) {
    throw ShapeError(std::string(what) + ": block counts differ (" +
                     std::to_string(a.num_blocks()) + " vs " + std::to_string(b.num_blocks()) + ")");
  }
  for (std::size_t i = 0; i < a.num_blocks(); ++i) {
    if (a.name(i) != b.name(i) || !a.tensor(i).same_shape(b.tensor(i))) {
      throw ShapeError(std::string(what) + ": block " + std::to_string(i) + " ('" + a.name(i) +
                       "' vs '" + b.name(i) + "') is not conformant");
    }
  }
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_conformant(a, b, "dot");
  const auto& k = simd::active_kernels();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.num_blocks(); ++i) {
    acc += k.dot(a.tensor(i).size(), a.tensor(i).data(), b.tensor(i).data());
  }
  return acc;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y) {
  ParamVector out = y;
  axpy_inplace(alpha, x, out);
  return out;
}

void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y) {
  require_conformant(x, y, "axpy");
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < x.num_blocks(); ++i) {
    k.axpy(x.tensor(i).size(), alpha, x.tensor(i).data(), y.tensor(i).data());
  }
}

ParamVector scaled(double alpha, const ParamVector& x) {
  ParamVector out = x;
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < out.num_blocks(); ++i) {
    k.scale(out.tensor(i).size(), alpha, x.tensor(i).data(), out.tensor(i).data());
  }
  return out;
}

ParamVector round_to_f32(const ParamVector& x) {
  ParamVector out = x;
  for (std::size_t i = 0; i < out.num_blocks(); ++i) {
    for (double& v : out.tensor(i).values()) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace bliss::ad
