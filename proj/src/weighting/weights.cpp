// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/weighting/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bliss/errors.hpp"
#include "bliss/parallel.hpp"

namespace bliss::weighting {
namespace {

void require_scores(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("importance weights of an empty batch");
  for (double s : scores) {
    if (!std::isfinite(s)) throw UsageError("importance weights: non-finite score");
  }
}

struct LocalSum {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
};

LocalSum local_sum(std::span<const double> scores) {
  LocalSum l;
  for (double s : scores) l.max = std::max(l.max, s);
  for (double s : scores) l.sum += std::exp(s - l.max);
  return l;
}

}  // namespace

std::size_t ShardLayout::total() const noexcept {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

ShardLayout ShardLayout::even(std::size_t n, std::size_t k) {
  if (k == 0) throw UsageError("shard layout needs at least one shard");
  ShardLayout l;
  for (std::size_t i = 0; i < k; ++i) l.counts.push_back(n / k + (i < n % k ? 1 : 0));
  return l;
}

ImportanceWeights softmax_weights(std::span<const double> scores) {
  require_scores(scores);
  const LocalSum l = local_sum(scores);
  ImportanceWeights w;
  w.weights.reserve(scores.size());
  for (double s : scores) w.weights.push_back(std::exp(s - l.max) / l.sum);
  w.denominator = std::exp(l.max) * l.sum;
  w.layout = ShardLayout{{scores.size()}};
  return w;
}

ImportanceWeights sharded_weights(std::span<const ScoreBatch> shards, std::size_t threads) {
  if (shards.empty()) throw UsageError("sharded_weights: no shards");
  std::vector<const ScoreBatch*> by_id(shards.size(), nullptr);
  for (const ScoreBatch& s : shards) {
    if (s.shard_id >= shards.size() || by_id[s.shard_id] != nullptr) {
      throw UsageError("sharded_weights: shard ids must be 0.." + std::to_string(shards.size() - 1) +
                       " without repeats");
    }
    if (s.sample_indices.size() != s.scores.size()) {
      throw UsageError("sharded_weights: shard " + std::to_string(s.shard_id) + " has " +
                       std::to_string(s.sample_indices.size()) + " indices but " + std::to_string(s.scores.size()) +
                       " scores");
    }
    for (double v : s.scores) {
      if (!std::isfinite(v)) throw UsageError("sharded_weights: non-finite score");
    }
    by_id[s.shard_id] = &s;
  }

  // Phase 1: local reductions.
  std::vector<LocalSum> local(shards.size());
  parallel_for(shards.size(), threads, [&](std::size_t k) { local[k] = local_sum(by_id[k]->scores); });

  // Phase 2: gather and combine in shard order.
  double global_max = -std::numeric_limits<double>::infinity();
  for (const LocalSum& l : local) global_max = std::max(global_max, l.max);
  if (!std::isfinite(global_max)) throw UsageError("sharded_weights: every shard is empty");
  double global_sum = 0.0;
  // Empty shards contribute 0 * exp(-inf) = 0.
  for (const LocalSum& l : local) global_sum += l.sum * std::exp(l.max - global_max);

  // Phase 3: local normalization.
  std::vector<std::vector<double>> parts(shards.size());
  parallel_for(shards.size(), threads, [&](std::size_t k) {
    for (double s : by_id[k]->scores) parts[k].push_back(std::exp(s - global_max) / global_sum);
  });

  ImportanceWeights w;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    w.weights.insert(w.weights.end(), parts[k].begin(), parts[k].end());
    w.layout.counts.push_back(parts[k].size());
  }
  w.denominator = std::exp(global_max) * global_sum;
  return w;
}

ImportanceWeights naive_weights(std::span<const double> scores) {
  require_scores(scores);
  ImportanceWeights w;
  const double b = static_cast<double>(scores.size());
  for (double s : scores) w.weights.push_back(s / b);
  w.denominator = b;
  w.layout = ShardLayout{{scores.size()}};
  w.mode = Mode::naive;
  return w;
}

std::vector<ScoreBatch> split_scores(std::span<const double> scores, std::span<const std::size_t> indices,
                                     const ShardLayout& layout) {
  if (scores.size() != indices.size() || layout.total() != scores.size()) {
    throw UsageError("split_scores: layout covers " + std::to_string(layout.total()) + " samples, batch has " +
                     std::to_string(scores.size()));
  }
  std::vector<ScoreBatch> out;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < layout.num_shards(); ++k) {
    ScoreBatch b;
    b.shard_id = k;
    b.sample_indices.assign(indices.begin() + static_cast<std::ptrdiff_t>(begin),
                            indices.begin() + static_cast<std::ptrdiff_t>(begin + layout.counts[k]));
    b.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(begin),
                    scores.begin() + static_cast<std::ptrdiff_t>(begin + layout.counts[k]));
    begin += layout.counts[k];
    out.push_back(std::move(b));
  }
  return out;
}

ImportanceWeights compute_weights(std::span<const double> scores, Mode mode, std::size_t shards,
                                  std::size_t threads) {
  if (mode == Mode::naive) return naive_weights(scores);
  require_scores(scores);
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto parts = split_scores(scores, idx, ShardLayout::even(scores.size(), shards));
  return sharded_weights(parts, threads);
}

std::vector<double> contraction_coefficients(const ImportanceWeights& w, std::span<const double> c) {
  if (c.size() != w.weights.size()) {
    throw UsageError("contraction: " + std::to_string(c.size()) + " scalars for " +
                     std::to_string(w.weights.size()) + " weights");
  }
  std::vector<double> out(c.size());
  if (w.mode == Mode::naive) {
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i] / static_cast<double>(c.size());
    return out;
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) mean += w.weights[i] * c[i];
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = w.weights[i] * (c[i] - mean);
  return out;
}

ad::ParamVector weight_jacobian_contraction(const ImportanceWeights& w, std::span<const ad::ParamVector> head_grads,
                                            std::span<const double> c) {
  if (head_grads.size() != w.weights.size()) {
    throw UsageError("contraction: " + std::to_string(head_grads.size()) + " head gradients for " +
                     std::to_string(w.weights.size()) + " weights");
  }
  const std::vector<double> coef = contraction_coefficients(w, c);
  ad::ParamVector out = head_grads[0].zeros_like();
  for (std::size_t i = 0; i < coef.size(); ++i) ad::axpy_inplace(coef[i], head_grads[i], out);
  return out;
}

ad::Var weights_graph(const ad::Var& h, Mode mode) {
  const std::size_t b = h.rows();
  if (h.cols() != 1) throw ShapeError("weights_graph: expected a [B,1] column of scores");
  if (mode == Mode::naive) return ad::scale(h, 1.0 / static_cast<double>(b));
  return ad::reshape(ad::softmax_rows(ad::reshape(h, {1, b})), {b, 1});
}

}  // namespace bliss::weighting
