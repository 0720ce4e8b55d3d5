// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <mutex>
#include <vector>

#include "bliss/bilevel/bilevel.hpp"
#include "bliss/models/models.hpp"
#include "bliss/weighting/weights.hpp"

namespace bliss::bilevel {

struct SelectionOptions {
  LowerConfig lower;
  weighting::Mode mode = weighting::Mode::softmax;
  std::size_t weight_shards = 1;
  std::size_t threads = 1;
  /// Also compute the hypergradient through the mixed second derivative and
  /// throw OptimizationError when the two disagree beyond this relative
  /// tolerance. 0 disables the check.
  double cross_check_tol = 0.0;
};

/// Proxy parameters theta_p against score parameters theta_s:
///   G = sum_i P_i(theta_s) CE_i(theta_p) + gamma * KL(proxy || teacher) + lambda * ||theta_p||^2
///   F = mean CE(theta_p)
/// P comes from the score model's outputs on the batch. The teacher is held by
/// value and never updated.
class SelectionProblem : public Problem {
 public:
  SelectionProblem(models::ModelConfig proxy_config, models::LanguageModel teacher, SelectionOptions options);

  ad::ScalarGraph lower_loss(const ad::ParamVector& theta_s, const data::SampleBatch& batch) const override;
  ad::ScalarGraph upper_loss(const data::SampleBatch& batch) const override;
  /// -sum_i w_i grad h_i with c_i = <grad CE_i, z> and w from the weighting
  /// Jacobian; gamma and lambda do not enter.
  ad::ParamVector hypergradient(const ad::ParamVector& theta_p, const ad::ParamVector& theta_s,
                                const data::SampleBatch& batch, const ad::ParamVector& z) const override;
  double kl(const ad::ParamVector& theta_p, const data::SampleBatch& batch) const override;

  /// c_i = <grad_theta_p CE_i, z> for every sample of the batch.
  std::vector<double> contractions(const ad::ParamVector& theta_p, const data::SampleBatch& batch,
                                   const ad::ParamVector& z) const;
  weighting::ImportanceWeights weights(const ad::ParamVector& theta_s, const data::SampleBatch& batch) const;
  /// Teacher log-probabilities for the batch rows, [B*T, V], cached by root index.
  ad::Tensor teacher_log_probs(const data::SampleBatch& batch) const;

  const models::ModelConfig& proxy_config() const noexcept { return cfg_; }
  const models::LanguageModel& teacher() const noexcept { return teacher_; }
  const SelectionOptions& options() const noexcept { return opt_; }

 private:
  models::ModelConfig cfg_;
  models::LanguageModel teacher_;
  SelectionOptions opt_;
  mutable std::mutex cache_mu_;
  mutable std::map<std::size_t, std::vector<double>> teacher_cache_;
};

}  // namespace bliss::bilevel
