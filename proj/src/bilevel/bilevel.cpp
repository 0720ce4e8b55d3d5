// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/bilevel/bilevel.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bliss/data/sampling.hpp"
#include "bliss/errors.hpp"
#include "bliss/rng.hpp"

namespace bliss::bilevel {

void LowerConfig::validate() const {
  if (!(gamma >= 0.0)) throw UsageError("gamma must be >= 0");
  if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
  if (!(eta1 >= 0.0)) throw UsageError("eta1 must be >= 0");
  if (inner_steps < 1) throw UsageError("inner_steps must be >= 1");
}

void GdlsConfig::validate() const {
  if (!(eta >= 0.0)) throw UsageError("gdls eta must be >= 0");
  if (k_steps < 1) throw UsageError("gdls k_steps must be >= 1");
}

void UpperConfig::validate() const {
  if (!(eta3 >= 0.0)) throw UsageError("eta3 must be >= 0");
}

void BilevelConfig::validate() const {
  lower.validate();
  gdls.validate();
  upper.validate();
  if (batch_size < 1 || val_batch_size < 1) throw UsageError("bilevel batch sizes must be >= 1");
}

GdlsResult gdls(const ad::ScalarGraph& hessian_graph, const ad::ParamVector& theta_p, const ad::ParamVector& a,
                const ad::ParamVector& z0, const GdlsConfig& cfg) {
  cfg.validate();
  ad::require_conformant(theta_p, a, "gdls rhs");
  ad::require_conformant(theta_p, z0, "gdls start");
  ad::HvpOperator hessian(hessian_graph, theta_p);
  GdlsResult out{z0, 0.0, cfg.eta, 0};
  ad::ParamVector z_prev = z0, r_prev;
  double prev_norm = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.k_steps; ++k) {
    ad::ParamVector r;
    try {
      r = ad::axpy(-1.0, a, hessian.apply(out.z));
    } catch (const NumericError& e) {
      throw OptimizationError(std::string("gdls: ") + e.what(), static_cast<long>(k));
    }
    double rn = ad::norm(r);
    if (!std::isfinite(rn)) throw OptimizationError("gdls: non-finite residual", static_cast<long>(k));
    if (cfg.guard && rn > prev_norm) {
      out.eta *= 0.5;
      ++out.halvings;
      out.z = z_prev;
      r = r_prev;
      rn = prev_norm;
    } else {
      z_prev = out.z;
      r_prev = r;
      prev_norm = rn;
    }
    out.residual = rn;
    ad::axpy_inplace(-out.eta, r, out.z);
  }
  return out;
}

ad::ParamVector lower_step(const ad::ScalarGraph& lower, ad::ParamVector theta_p, const LowerConfig& cfg,
                           double* first_loss, long step_index) {
  for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
    double loss = 0.0;
    ad::ParamVector g;
    try {
      std::tie(loss, g) = ad::value_and_grad(lower, theta_p);
    } catch (const NumericError& e) {
      throw OptimizationError(std::string("lower step: ") + e.what(), step_index);
    }
    if (!std::isfinite(loss)) throw OptimizationError("lower step: non-finite loss", step_index);
    if (s == 0 && first_loss != nullptr) *first_loss = loss;
    ad::axpy_inplace(-cfg.eta1, g, theta_p);
  }
  return theta_p;
}

ad::ParamVector upper_step(const ad::ParamVector& theta_s, const ad::ParamVector& hypergrad, const UpperConfig& cfg) {
  return ad::axpy(-cfg.eta3, hypergrad, theta_s);
}

ad::ParamVector Problem::hypergradient(const ad::ParamVector& theta_p, const ad::ParamVector& theta_s,
                                       const data::SampleBatch& batch, const ad::ParamVector& z) const {
  return mixed_hypergradient(*this, theta_p, theta_s, batch, z);
}

ad::ParamVector mixed_hypergradient(const Problem& problem, const ad::ParamVector& theta_p,
                                    const ad::ParamVector& theta_s, const data::SampleBatch& batch,
                                    const ad::ParamVector& z) {
  return ad::scaled(-1.0, ad::mixed_vjp(problem.lower_loss(theta_s, batch), theta_s, theta_p, z));
}

BilevelState run_bilevel(const Problem& problem, BilevelState state, const data::TokenDataset& train_subset,
                         const data::TokenDataset& validation, const BilevelConfig& cfg, std::uint64_t seed,
                         const MetricsSink& sink) {
  cfg.validate();
  if (train_subset.empty() || validation.empty()) throw UsageError("run_bilevel: empty training or validation set");
  if (state.z.empty()) state.z = state.theta_p.zeros_like();
  ad::require_conformant(state.theta_p, state.z, "bilevel z");

  const std::size_t b = std::min(cfg.batch_size, train_subset.size());
  const std::size_t bv = std::min(cfg.val_batch_size, validation.size());
  data::BatchIterator xi(train_subset, b, derive(seed, Stream::bilevel_batches, 0));
  data::BatchIterator xi_h(train_subset, b, derive(seed, Stream::bilevel_batches, 1));
  data::BatchIterator pi(train_subset, b, derive(seed, Stream::bilevel_batches, 2));
  data::BatchIterator zeta(validation, bv, derive(seed, Stream::bilevel_batches, 3));

  for (std::size_t step = 0; step < cfg.upper.t_steps; ++step) {
    const auto t = static_cast<long>(state.t);
    const data::SampleBatch lower_batch = xi.next();
    const data::SampleBatch hessian_batch = xi_h.next();
    const data::SampleBatch mixed_batch = pi.next();
    const data::SampleBatch val_batch = zeta.next();

    StepMetrics m;
    m.t = state.t;
    ad::ParamVector a;
    try {
      std::tie(m.upper_loss, a) = ad::value_and_grad(problem.upper_loss(val_batch), state.theta_p);
    } catch (const NumericError& e) {
      throw OptimizationError(std::string("upper gradient: ") + e.what(), t);
    }
    if (!std::isfinite(m.upper_loss)) throw OptimizationError("non-finite upper loss", t);

    const ad::ParamVector z0 = cfg.gdls.warm_start ? state.z : state.theta_p.zeros_like();
    GdlsResult solved;
    try {
      solved = gdls(problem.lower_loss(state.theta_s, hessian_batch), state.theta_p, a, z0, cfg.gdls);
    } catch (const OptimizationError& e) {
      throw OptimizationError(e.what(), t);
    }
    m.z_residual = solved.residual;
    m.kl = problem.kl(state.theta_p, lower_batch);

    ad::ParamVector theta_p_next = lower_step(problem.lower_loss(state.theta_s, lower_batch), state.theta_p,
                                              cfg.lower, &m.lower_loss, t);
    ad::ParamVector hyper;
    try {
      hyper = problem.hypergradient(theta_p_next, state.theta_s, mixed_batch, solved.z);
    } catch (const NumericError& e) {
      throw OptimizationError(std::string("hypergradient: ") + e.what(), t);
    }
    m.hypergrad_norm = ad::norm(hyper);
    if (!std::isfinite(m.hypergrad_norm)) throw OptimizationError("non-finite hypergradient", t);

    state.theta_s = upper_step(state.theta_s, hyper, cfg.upper);
    state.theta_p = std::move(theta_p_next);
    state.z = std::move(solved.z);
    ++state.t;
    if (sink) sink(m);
  }
  return state;
}

}  // namespace bliss::bilevel
