// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "bliss/data/dataset.hpp"

namespace bliss::data {

struct CorpusSpec {
  std::size_t num_seqs = 10000;
  std::uint32_t vocab = 256;
  std::uint32_t seq_len = 64;
  double noise_fraction = 0.5;
  /// Row sampling and shuffling.
  std::uint64_t seed = 0;
  /// Transition table. Corpora sharing chain_seed share the clean distribution.
  std::uint64_t chain_seed = 0;
};

/// Clean rows follow an order-2 Markov chain: each context (a, b) has four
/// successor tokens, drawn once from a Zipf law over the vocabulary, taken
/// with probabilities 0.55/0.25/0.15/0.05. Corrupted rows are uniform noise.
/// round(noise_fraction * num_seqs) rows are corrupted; row order is a
/// seeded shuffle.
LabeledDataset make_synthetic_corpus(const CorpusSpec& spec);

}  // namespace bliss::data
