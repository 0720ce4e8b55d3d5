// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "bliss/errors.hpp"
#include "bliss/rng.hpp"

namespace bliss::data {
namespace {

constexpr std::array<double, 4> kSuccessorCdf{0.55, 0.80, 0.95, 1.0};

class MarkovChain {
 public:
  MarkovChain(std::uint32_t vocab, std::uint64_t seed) : vocab_(vocab) {
    std::vector<double> cdf(vocab);
    double z = 0.0;
    for (std::uint32_t v = 0; v < vocab; ++v) {
      z += 1.0 / (v + 1.0);
      cdf[v] = z;
    }
    for (double& c : cdf) c /= z;
    // Zipf rank -> token id, so frequent tokens are not simply the low ids.
    rank_to_token_.resize(vocab);
    std::iota(rank_to_token_.begin(), rank_to_token_.end(), 0u);
    Rng rng(derive(seed, Stream::corpus_chain));
    for (std::size_t i = vocab; i > 1; --i) std::swap(rank_to_token_[i - 1], rank_to_token_[rng.below(i)]);
    zipf_cdf_ = std::move(cdf);
    successors_.resize(static_cast<std::size_t>(vocab) * vocab * 4);
    for (auto& s : successors_) s = zipf(rng);
  }

  std::uint32_t zipf(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(zipf_cdf_.begin(), zipf_cdf_.end(), u);
    const auto rank = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - zipf_cdf_.begin(), vocab_ - 1));
    return rank_to_token_[rank];
  }

  std::uint32_t next(std::uint32_t a, std::uint32_t b, Rng& rng) const {
    const double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < kSuccessorCdf.size() && u >= kSuccessorCdf[k]) ++k;
    return successors_[(static_cast<std::size_t>(a) * vocab_ + b) * 4 + k];
  }

 private:
  std::uint32_t vocab_;
  std::vector<double> zipf_cdf_;
  std::vector<std::uint32_t> rank_to_token_;
  std::vector<std::uint32_t> successors_;
};

}  // namespace

LabeledDataset make_synthetic_corpus(const CorpusSpec& spec) {
  if (!(spec.noise_fraction >= 0.0 && spec.noise_fraction <= 1.0)) {
    throw UsageError("corpus: noise_fraction must lie in [0, 1]");
  }
  if (spec.vocab < 2) throw UsageError("corpus: vocab must be at least 2");
  if (spec.seq_len < 2) throw UsageError("corpus: seq_len must be at least 2");
  const MarkovChain chain(spec.vocab, spec.chain_seed);
  const auto n_corrupt =
      static_cast<std::size_t>(std::llround(spec.noise_fraction * static_cast<double>(spec.num_seqs)));

  Rng rng(derive(spec.seed, Stream::corpus_rows));
  std::vector<Provenance> order(spec.num_seqs, Provenance::clean);
  std::fill_n(order.begin(), n_corrupt, Provenance::corrupted);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<std::uint32_t> tokens;
  tokens.reserve(spec.num_seqs * spec.seq_len);
  for (Provenance p : order) {
    if (p == Provenance::corrupted) {
      for (std::uint32_t t = 0; t < spec.seq_len; ++t) {
        tokens.push_back(static_cast<std::uint32_t>(rng.below(spec.vocab)));
      }
      continue;
    }
    std::uint32_t a = chain.zipf(rng);
    std::uint32_t b = chain.zipf(rng);
    tokens.push_back(a);
    tokens.push_back(b);
    for (std::uint32_t t = 2; t < spec.seq_len; ++t) {
      const std::uint32_t c = chain.next(a, b, rng);
      tokens.push_back(c);
      a = b;
      b = c;
    }
  }
  return {TokenDataset(spec.vocab, spec.seq_len, std::move(tokens)), std::move(order)};
}

}  // namespace bliss::data
