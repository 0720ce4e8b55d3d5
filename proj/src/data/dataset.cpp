// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/data/dataset.hpp"

#include <fstream>
#include <numeric>
#include <string>

#include "bliss/errors.hpp"
#include "bliss/io/binary.hpp"

namespace bliss::data {

TokenDataset::TokenDataset(std::uint32_t vocab_size, std::uint32_t seq_len,
                           std::vector<std::uint32_t> tokens)
    : vocab_(vocab_size), seq_len_(seq_len), tokens_(std::move(tokens)) {
  if (seq_len_ == 0) throw DataError("dataset: seq_len must be positive");
  if (tokens_.size() % seq_len_ != 0) {
    throw DataError("dataset: " + std::to_string(tokens_.size()) +
                    " tokens is not a whole number of rows of length " + std::to_string(seq_len_));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] >= vocab_) {
      throw DataError("dataset: token id " + std::to_string(tokens_[i]) + " at row " +
                      std::to_string(i / seq_len_) + " exceeds vocab " + std::to_string(vocab_));
    }
  }
  source_.resize(tokens_.size() / seq_len_);
  std::iota(source_.begin(), source_.end(), std::size_t{0});
}

TokenDataset TokenDataset::subset(std::span<const std::size_t> rows) const {
  TokenDataset out;
  out.vocab_ = vocab_;
  out.seq_len_ = seq_len_;
  out.tokens_.reserve(rows.size() * seq_len_);
  out.source_.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= size()) throw UsageError("dataset subset: row " + std::to_string(r) + " out of range");
    const auto src = row(r);
    out.tokens_.insert(out.tokens_.end(), src.begin(), src.end());
    out.source_.push_back(source_[r]);
  }
  return out;
}

TokenDataset TokenDataset::range(std::size_t begin, std::size_t count) const {
  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), begin);
  return subset(rows);
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write("BLTD", 4);
  io::write_le<std::uint32_t>(out, kDatasetVersion);
  io::write_le<std::uint32_t>(out, ds.data.vocab_size());
  io::write_le<std::uint32_t>(out, ds.data.seq_len());
  io::write_le<std::uint64_t>(out, ds.data.size());
  io::write_le<std::uint8_t>(out, ds.labels ? 1 : 0);
  for (std::uint32_t t : ds.data.tokens()) io::write_le<std::uint32_t>(out, t);
  if (ds.labels) {
    if (ds.labels->size() != ds.data.size()) throw UsageError("dataset: label count mismatch");
    for (Provenance p : *ds.labels) io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p));
  }
  if (!out) throw Error("dataset write failed: " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  io::expect_magic(in, "BLTD", "dataset");
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kDatasetVersion) throw DataError("dataset: unsupported version " + std::to_string(version));
  const auto vocab = io::read_le<std::uint32_t>(in);
  const auto seq_len = io::read_le<std::uint32_t>(in);
  const auto rows = io::read_le<std::uint64_t>(in);
  const auto has_labels = io::read_le<std::uint8_t>(in);
  std::vector<std::uint32_t> tokens(static_cast<std::size_t>(rows) * seq_len);
  for (auto& t : tokens) t = io::read_le<std::uint32_t>(in);
  LabeledDataset out{TokenDataset(vocab, seq_len, std::move(tokens)), std::nullopt};
  if (has_labels != 0) {
    std::vector<Provenance> labels(static_cast<std::size_t>(rows));
    for (auto& l : labels) {
      const auto b = io::read_le<std::uint8_t>(in);
      if (b > 1) throw DataError("dataset: invalid provenance byte " + std::to_string(b));
      l = static_cast<Provenance>(b);
    }
    out.labels = std::move(labels);
  }
  return out;
}

SampleBatch make_batch(const TokenDataset& ds, std::span<const std::size_t> rows) {
  SampleBatch b;
  b.seq_len = ds.seq_len();
  b.indices.reserve(rows.size());
  b.tokens.reserve(rows.size() * ds.seq_len());
  for (std::size_t r : rows) {
    const auto src = ds.row(r);
    b.tokens.insert(b.tokens.end(), src.begin(), src.end());
    b.indices.push_back(ds.source_index(r));
  }
  return b;
}

}  // namespace bliss::data
