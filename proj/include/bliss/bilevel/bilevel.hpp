// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

#include "bliss/autodiff/graph.hpp"
#include "bliss/data/dataset.hpp"

namespace bliss::bilevel {

struct LowerConfig {
  double gamma = 1e-2;
  double lambda = 1e-6;
  double eta1 = 1e-5;
  std::size_t inner_steps = 1;
  void validate() const;
};

struct GdlsConfig {
  double eta = 1e-2;
  std::size_t k_steps = 3;
  bool warm_start = true;
  /// Halve eta and retry from the previous iterate when the residual grows.
  bool guard = true;
  void validate() const;
};

struct UpperConfig {
  double eta3 = 1e-5;
  std::size_t t_steps = 3000;
  void validate() const;
};

struct GdlsResult {
  ad::ParamVector z;
  /// ||H z_k - a|| at the last iterate whose residual was evaluated.
  double residual = 0.0;
  double eta = 0.0;
  std::size_t halvings = 0;
};

/// K steps of z <- z - eta (H z - a), H the Hessian of hessian_graph at
/// theta_p. Throws OptimizationError on a non-finite Hessian product.
GdlsResult gdls(const ad::ScalarGraph& hessian_graph, const ad::ParamVector& theta_p, const ad::ParamVector& a,
                const ad::ParamVector& z0, const GdlsConfig& cfg);

/// inner_steps gradient steps of theta_p on one lower-level graph. Throws
/// OptimizationError with the step index on non-finite values. first_loss,
/// when given, receives the loss before the first step.
ad::ParamVector lower_step(const ad::ScalarGraph& lower, ad::ParamVector theta_p, const LowerConfig& cfg,
                           double* first_loss = nullptr, long step_index = 0);

/// theta_s - eta3 * hypergrad.
ad::ParamVector upper_step(const ad::ParamVector& theta_s, const ad::ParamVector& hypergrad, const UpperConfig& cfg);

/// A bilevel problem: lower objective G(theta_p, theta_s) and upper
/// objective F(theta_p), each on a mini-batch.
class Problem {
 public:
  virtual ~Problem() = default;

  /// G with theta_p as the primary slot and theta_s bound as the secondary.
  virtual ad::ScalarGraph lower_loss(const ad::ParamVector& theta_s, const data::SampleBatch& batch) const = 0;
  virtual ad::ScalarGraph upper_loss(const data::SampleBatch& batch) const = 0;
  /// -d^2 G / (d theta_s d theta_p) applied to z. The default differentiates
  /// the lower graph twice (mixed_hypergradient).
  virtual ad::ParamVector hypergradient(const ad::ParamVector& theta_p, const ad::ParamVector& theta_s,
                                        const data::SampleBatch& batch, const ad::ParamVector& z) const;
  /// Distillation term for metrics; 0 when the problem has none.
  virtual double kl(const ad::ParamVector& /*theta_p*/, const data::SampleBatch& /*batch*/) const { return 0.0; }
};

ad::ParamVector mixed_hypergradient(const Problem& problem, const ad::ParamVector& theta_p,
                                    const ad::ParamVector& theta_s, const data::SampleBatch& batch,
                                    const ad::ParamVector& z);

struct BilevelConfig {
  LowerConfig lower;
  GdlsConfig gdls;
  UpperConfig upper;
  std::size_t batch_size = 16;
  std::size_t val_batch_size = 16;
  void validate() const;
};

struct BilevelState {
  ad::ParamVector theta_p;
  ad::ParamVector theta_s;
  ad::ParamVector z;
  std::size_t t = 0;
};

struct StepMetrics {
  std::size_t t = 0;
  double lower_loss = 0.0;
  double upper_loss = 0.0;
  double kl = 0.0;
  double hypergrad_norm = 0.0;
  double z_residual = 0.0;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// upper.t_steps iterations. Each step draws independent batches xi, xi~, pi
/// from the training subset and zeta from the validation set, then:
///   a = grad F(theta_p^t; zeta), z = gdls(G(theta_p^t, theta_s^t; xi~), a),
///   theta_p^{t+1} = lower_step(G(., theta_s^t; xi)),
///   theta_s^{t+1} = theta_s^t - eta3 * hypergradient(theta_p^{t+1}, theta_s^t; pi, z).
/// An empty state.z starts from zero.
BilevelState run_bilevel(const Problem& problem, BilevelState state, const data::TokenDataset& train_subset,
                         const data::TokenDataset& validation, const BilevelConfig& cfg, std::uint64_t seed,
                         const MetricsSink& sink = {});

}  // namespace bliss::bilevel
