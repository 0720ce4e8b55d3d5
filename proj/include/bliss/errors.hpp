// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bliss {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration. The CLI maps this to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-conformant ParamVectors or op operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Token ids out of range, malformed files, length mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared during evaluation or differentiation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string block)
      : Error(what + (block.empty() ? std::string() : " [block " + block + "]")),
        block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

/// An optimization loop produced a non-finite loss or gradient.
class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace bliss
