// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "bliss/data/dataset.hpp"
#include "bliss/rng.hpp"

namespace bliss::data {

struct ShardRange {
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// One contiguous, disjoint row range per round; sizes differ by at most one.
struct ShardSet {
  std::size_t parent_size = 0;
  std::vector<ShardRange> shards;

  std::size_t num_rounds() const noexcept { return shards.size(); }
  TokenDataset shard(const TokenDataset& parent, std::size_t r) const;
};

/// Throws UsageError unless 1 <= rounds <= rows. The result is checked for
/// disjointness and coverage before it is returned.
ShardSet partition_shards(std::size_t rows, std::size_t rounds);
/// Throws Error if the shard ranges overlap, leave gaps or are unbalanced.
void validate_shards(const ShardSet& set);

/// max(1, round(fraction * n)) rows drawn uniformly without replacement, in
/// ascending row order.
std::size_t subset_size(std::size_t n, double fraction);
TokenDataset sample_bilevel_subset(const TokenDataset& shard, double fraction, std::uint64_t seed);

/// Endless stream of batches over seeded shuffled epochs. Each epoch visits
/// every row once; a batch may straddle two epochs.
class BatchIterator {
 public:
  BatchIterator(const TokenDataset& ds, std::size_t batch_size, std::uint64_t seed);

  SampleBatch next();
  /// Row positions of the next batch without building it.
  std::vector<std::size_t> next_rows();

 private:
  void reshuffle();

  const TokenDataset* ds_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace bliss::data
