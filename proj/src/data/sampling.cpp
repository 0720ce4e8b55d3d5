// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/data/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bliss/errors.hpp"

namespace bliss::data {

TokenDataset ShardSet::shard(const TokenDataset& parent, std::size_t r) const {
  if (r >= shards.size()) {
    throw UsageError("round " + std::to_string(r) + " has no shard (" + std::to_string(shards.size()) +
                     " rounds)");
  }
  if (parent.size() != parent_size) throw UsageError("shard set does not match dataset size");
  return parent.range(shards[r].begin, shards[r].count);
}

ShardSet partition_shards(std::size_t rows, std::size_t rounds) {
  if (rounds < 1 || rounds > rows) {
    throw UsageError("partition_shards: need 1 <= R <= " + std::to_string(rows) + ", got " +
                     std::to_string(rounds));
  }
  ShardSet set;
  set.parent_size = rows;
  const std::size_t base = rows / rounds;
  const std::size_t extra = rows % rounds;
  std::size_t begin = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::size_t count = base + (r < extra ? 1 : 0);
    set.shards.push_back({begin, count});
    begin += count;
  }
  validate_shards(set);
  return set;
}

void validate_shards(const ShardSet& set) {
  std::vector<char> seen(set.parent_size, 0);
  std::size_t lo = set.parent_size, hi = 0;
  for (const ShardRange& s : set.shards) {
    if (s.begin + s.count > set.parent_size) throw Error("shard exceeds parent");
    for (std::size_t i = s.begin; i < s.begin + s.count; ++i) {
      if (seen[i]) throw Error("shards overlap at row " + std::to_string(i));
      seen[i] = 1;
    }
    lo = std::min(lo, s.count);
    hi = std::max(hi, s.count);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw Error("shards do not cover parent");
  if (!set.shards.empty() && hi - lo > 1) throw Error("shard sizes differ by more than one");
}

std::size_t subset_size(std::size_t n, double fraction) {
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::min(n, std::max<std::size_t>(1, k));
}

TokenDataset sample_bilevel_subset(const TokenDataset& shard, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("bilevel subset fraction must be in (0, 1]");
  if (shard.empty()) throw UsageError("cannot sample a bilevel subset from an empty shard");
  const std::size_t n = shard.size();
  const std::size_t k = subset_size(n, fraction);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(derive(seed, Stream::bilevel_subset));
  for (std::size_t i = 0; i < k; ++i) std::swap(rows[i], rows[i + rng.below(n - i)]);
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return shard.subset(rows);
}

BatchIterator::BatchIterator(const TokenDataset& ds, std::size_t batch_size, std::uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0 || batch_size > ds.size()) {
    throw UsageError("batch size " + std::to_string(batch_size) + " must be in [1, " +
                     std::to_string(ds.size()) + "]");
  }
  order_.resize(ds.size());
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> BatchIterator::next_rows() {
  std::vector<std::size_t> rows;
  rows.reserve(batch_size_);
  while (rows.size() < batch_size_) {
    if (cursor_ == order_.size()) reshuffle();
    rows.push_back(order_[cursor_++]);
  }
  return rows;
}

SampleBatch BatchIterator::next() { return make_batch(*ds_, next_rows()); }

}  // namespace bliss::data
