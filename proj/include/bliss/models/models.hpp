// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bliss/autodiff/graph.hpp"
#include "bliss/data/dataset.hpp"

namespace bliss::models {

enum class Family : std::uint8_t { proxy, target };

struct ModelConfig {
  std::uint32_t vocab_size = 256;
  std::uint32_t seq_len = 64;
  std::uint32_t d_model = 64;
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 2;
  Family family = Family::proxy;

  std::uint32_t head_dim() const noexcept { return d_model / n_heads; }
  std::uint32_t ffn_hidden() const noexcept { return 4 * d_model; }
  /// Throws UsageError on d_model % n_heads != 0, seq_len < 2 or vocab < 2.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig default_proxy_config();
ModelConfig default_target_config();

/// Pre-norm causal decoder: token + position embeddings, n_layers blocks of
/// multi-head self-attention and a GELU feed-forward, RMS-normalized, then a
/// linear projection to the vocabulary. Used for both proxy and target.
struct LanguageModel {
  ModelConfig config;
  ad::ParamVector params;
};

/// The proxy body with the vocabulary projection replaced by mean pooling
/// over positions, a d_model -> 1 affine map and a sigmoid.
struct ScoreModel {
  ModelConfig config;
  ad::ParamVector params;
};

/// Gaussian initialization with a seeded stream.
LanguageModel make_language_model(const ModelConfig& config, std::uint64_t seed);

/// Body blocks copied from the proxy; zero head, so every score starts at 0.5.
ScoreModel init_score_from_proxy(const LanguageModel& proxy);

/// True for blocks shared by the proxy and score bodies.
bool is_body_block(std::string_view name);

// ---- graph pieces ----------------------------------------------------------

/// Final normalized features, [B*T, d_model]. Throws DataError on a length or
/// vocabulary mismatch.
ad::Var body_forward(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                     const data::SampleBatch& batch);
/// Next-token log-probabilities, [B*T, vocab].
ad::Var lm_log_probs(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                     const data::SampleBatch& batch);
/// Mean next-token cross-entropy of each sequence, [B, 1].
ad::Var per_sample_ce(const ad::Var& log_probs, const data::SampleBatch& batch);
/// Mean over positions of KL(student || teacher); teacher is a constant.
ad::Var mean_kl(ad::Tape& tape, const ad::Var& student_log_probs, const ad::Tensor& teacher_log_probs);
/// h in (0, 1) per sample, [B, 1].
ad::Var score_forward(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                      const data::SampleBatch& batch);

// ---- losses as graphs over the model parameters ----------------------------

ad::ScalarGraph lm_loss(const ModelConfig& cfg, data::SampleBatch batch);
ad::ScalarGraph kl_loss(const ModelConfig& student_cfg, const ad::Tensor& teacher_log_probs,
                        data::SampleBatch batch);
ad::ScalarGraph kl_loss(const LanguageModel& student, const LanguageModel& teacher,
                        data::SampleBatch batch);

// ---- value-only evaluation --------------------------------------------------

double evaluate_lm_loss(const LanguageModel& model, const data::SampleBatch& batch);
std::vector<double> per_sample_loss(const LanguageModel& model, const data::SampleBatch& batch);
ad::Tensor log_probs(const LanguageModel& model, const data::SampleBatch& batch);
double evaluate_kl(const LanguageModel& student, const LanguageModel& teacher,
                   const data::SampleBatch& batch);
std::vector<double> score_batch(const ScoreModel& model, const data::SampleBatch& batch);
/// Throws DataError unless sample.size() == seq_len.
double score(const ScoreModel& model, std::span<const std::uint32_t> sample);

/// sum_i p_i log(p_i / q_i) with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// ---- checkpoints ------------------------------------------------------------

/// <path> in BLPV format plus <path>.manifest holding the config as key=value.
void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ad::ParamVector& params);
ModelConfig load_model_config(const std::filesystem::path& path);
LanguageModel load_language_model(const std::filesystem::path& path);
ScoreModel load_score_model(const std::filesystem::path& path);

}  // namespace bliss::models
