// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace bliss::data {

/// Fixed-length token rows. Rows remember their index in the root dataset so
/// subsets and shards report stable ids. Carries no provenance: labels live
/// in a separate vector that only evaluation receives.
class TokenDataset {
 public:
  TokenDataset() = default;
  /// Root dataset; source indices are 0..n-1. Throws DataError on ids >= vocab
  /// or a token count that is not a multiple of seq_len.
  TokenDataset(std::uint32_t vocab_size, std::uint32_t seq_len, std::vector<std::uint32_t> tokens);

  std::uint32_t vocab_size() const noexcept { return vocab_; }
  std::uint32_t seq_len() const noexcept { return seq_len_; }
  std::size_t size() const noexcept { return source_.size(); }
  bool empty() const noexcept { return source_.empty(); }

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {tokens_.data() + i * seq_len_, seq_len_};
  }
  std::span<const std::uint32_t> tokens() const noexcept { return tokens_; }
  /// Index of row i in the root dataset.
  std::size_t source_index(std::size_t i) const { return source_[i]; }
  std::span<const std::size_t> source_indices() const noexcept { return source_; }

  /// Rows at the given positions of this dataset, in the given order.
  TokenDataset subset(std::span<const std::size_t> rows) const;
  /// Contiguous rows [begin, begin+count).
  TokenDataset range(std::size_t begin, std::size_t count) const;

  friend bool operator==(const TokenDataset&, const TokenDataset&) = default;

 private:
  std::uint32_t vocab_ = 0;
  std::uint32_t seq_len_ = 0;
  std::vector<std::uint32_t> tokens_;
  std::vector<std::size_t> source_;
};

enum class Provenance : std::uint8_t { clean = 0, corrupted = 1 };

/// A dataset plus, for synthetic corpora, one provenance label per row.
struct LabeledDataset {
  TokenDataset data;
  std::optional<std::vector<Provenance>> labels;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

// "BLTD" | u32 version | u32 vocab_size | u32 seq_len | u64 num_seqs |
// u8 has_labels | u32 tokens... | (labels: num_seqs bytes, 0=clean 1=corrupted)
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Mini-batch: token rows with their root indices.
struct SampleBatch {
  std::vector<std::size_t> indices;
  std::vector<std::uint32_t> tokens;
  std::uint32_t seq_len = 0;

  std::size_t size() const noexcept { return indices.size(); }
  std::span<const std::uint32_t> row(std::size_t i) const {
    return {tokens.data() + i * seq_len, seq_len};
  }
};

/// Batch of the given dataset rows (positions within ds).
SampleBatch make_batch(const TokenDataset& ds, std::span<const std::size_t> rows);

}  // namespace bliss::data
