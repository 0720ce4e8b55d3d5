// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bliss/autodiff/ops.hpp"
#include "bliss/autodiff/param_vector.hpp"

namespace bliss::weighting {

/// softmax: P_i = exp(h_i) / sum_j exp(h_j). naive: P_i = h_i / B.
enum class Mode : std::uint8_t { softmax, naive };

/// How a batch is split over logical workers.
struct ShardLayout {
  std::vector<std::size_t> counts;

  std::size_t num_shards() const noexcept { return counts.size(); }
  std::size_t total() const noexcept;
  /// n samples over k shards, sizes differing by at most one, larger first.
  static ShardLayout even(std::size_t n, std::size_t k);

  friend bool operator==(const ShardLayout&, const ShardLayout&) = default;
};

/// The scores one worker holds.
struct ScoreBatch {
  std::size_t shard_id = 0;
  std::vector<std::size_t> sample_indices;
  std::vector<double> scores;
};

struct ImportanceWeights {
  std::vector<double> weights;
  /// sum_j exp(h_j) for softmax, B for naive.
  double denominator = 0.0;
  ShardLayout layout;
  Mode mode = Mode::softmax;
};

/// Max-shifted softmax over one batch. Throws UsageError when empty or
/// non-finite.
ImportanceWeights softmax_weights(std::span<const double> scores);

/// Three phases: every shard reduces its scores to (local max, shifted
/// exp-sum); the pairs are gathered and combined in ascending shard_id order;
/// every shard then normalizes with the global pair. Equal to softmax_weights
/// over the concatenation in shard_id order. Throws UsageError on duplicate
/// or missing shard ids, or a shard whose index and score counts differ.
ImportanceWeights sharded_weights(std::span<const ScoreBatch> shards, std::size_t threads = 1);

ImportanceWeights naive_weights(std::span<const double> scores);

/// Splits a batch's scores into contiguous per-shard batches.
std::vector<ScoreBatch> split_scores(std::span<const double> scores, std::span<const std::size_t> indices,
                                     const ShardLayout& layout);

/// softmax mode goes through sharded_weights over an even layout.
ImportanceWeights compute_weights(std::span<const double> scores, Mode mode, std::size_t shards = 1,
                                  std::size_t threads = 1);

/// Per-sample coefficients w_i with sum_i dP_i/dtheta_s * c_i = sum_i w_i grad h_i:
/// softmax w_i = P_i (c_i - sum_j P_j c_j), naive w_i = c_i / B.
std::vector<double> contraction_coefficients(const ImportanceWeights& w, std::span<const double> c);

/// sum_i (dP_i/dtheta_s) c_i from per-sample head gradients grad h_i. The
/// caller applies any leading sign. Throws UsageError on length mismatch.
ad::ParamVector weight_jacobian_contraction(const ImportanceWeights& w, std::span<const ad::ParamVector> head_grads,
                                            std::span<const double> c);

/// P as a differentiable function of h ([B,1] in, [B,1] out).
ad::Var weights_graph(const ad::Var& h, Mode mode);

}  // namespace bliss::weighting
