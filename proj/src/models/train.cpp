// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/models/train.hpp"

#include <cmath>

#include "bliss/data/sampling.hpp"
#include "bliss/errors.hpp"
#include "bliss/rng.hpp"

namespace bliss::models {
namespace {

constexpr std::size_t kProbeRows = 64;

data::SampleBatch probe_batch(const data::TokenDataset& data, std::uint64_t seed) {
  const std::size_t n = std::min(kProbeRows, data.size());
  data::BatchIterator it(data, n, derive(seed, Stream::probe));
  return it.next();
}

class Adam {
 public:
  Adam(const ad::ParamVector& like, const TrainConfig& cfg) : cfg_(cfg), m_(like.zeros_like()), v_(m_) {}

  void step(ad::ParamVector& params, const ad::ParamVector& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.num_blocks(); ++b) {
      auto p = params.tensor(b).values();
      auto m = m_.tensor(b).values();
      auto v = v_.tensor(b).values();
      const auto gv = g.tensor(b).values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gv[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gv[i] * gv[i];
        p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
      }
    }
  }

 private:
  TrainConfig cfg_;
  ad::ParamVector m_;
  ad::ParamVector v_;
  long t_ = 0;
};

}  // namespace

TrainResult train_lm(LanguageModel& model, const data::TokenDataset& data, const TrainConfig& cfg,
                     std::uint64_t seed, const StepCallback& on_step) {
  TrainResult result;
  const data::SampleBatch probe = probe_batch(data, seed);
  result.initial_loss = evaluate_lm_loss(model, probe);
  if (cfg.steps == 0) {
    result.final_loss = result.initial_loss;
    return result;
  }
  if (!(cfg.lr >= 0.0)) throw UsageError("learning rate must be non-negative");
  data::BatchIterator batches(data, std::min(cfg.batch_size, data.size()), seed);
  Adam adam(model.params, cfg);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto [loss, g] = ad::value_and_grad(lm_loss(model.config, batches.next()), model.params);
    if (!std::isfinite(loss)) throw OptimizationError("non-finite training loss", static_cast<long>(step));
    if (cfg.clip_norm > 0.0) {
      const double n = ad::norm(g);
      if (n > cfg.clip_norm) g = ad::scaled(cfg.clip_norm / n, g);
    }
    if (cfg.optimizer == Optimizer::adam) {
      adam.step(model.params, g);
    } else {
      ad::axpy_inplace(-cfg.lr, g, model.params);
    }
    if (auto bad = model.params.first_non_finite()) {
      throw OptimizationError("non-finite parameters in block " + *bad, static_cast<long>(step));
    }
    if (on_step) on_step(step, loss);
  }
  result.final_loss = evaluate_lm_loss(model, probe);
  return result;
}

TrainResult warmup_train(LanguageModel& model, const data::TokenDataset& data, const TrainConfig& cfg,
                         std::uint64_t seed) {
  return train_lm(model, data, cfg, derive(seed, Stream::warmup, static_cast<std::uint64_t>(model.config.family)));
}

}  // namespace bliss::models
