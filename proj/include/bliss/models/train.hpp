// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

#include "bliss/data/dataset.hpp"
#include "bliss/models/models.hpp"

namespace bliss::models {

enum class Optimizer : std::uint8_t { sgd, adam };

struct TrainConfig {
  std::size_t steps = 0;
  double lr = 0.1;
  std::size_t batch_size = 16;
  Optimizer optimizer = Optimizer::sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

struct TrainResult {
  /// Loss of a fixed seeded probe batch before and after training.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Called after every step with (step, batch loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// Plain cross-entropy training on uniformly shuffled batches. Throws
/// OptimizationError on a non-finite loss or gradient.
TrainResult train_lm(LanguageModel& model, const data::TokenDataset& data, const TrainConfig& cfg,
                     std::uint64_t seed, const StepCallback& on_step = {});

/// train_lm under the warm-up stream of seed.
TrainResult warmup_train(LanguageModel& model, const data::TokenDataset& data, const TrainConfig& cfg,
                         std::uint64_t seed);

}  // namespace bliss::models
