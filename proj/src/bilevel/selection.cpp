// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/bilevel/selection.hpp"

#include <algorithm>
#include <cmath>

#include "bliss/errors.hpp"

namespace bliss::bilevel {
namespace {

using ad::Tensor;
using ad::Var;

Tensor column(const std::vector<double>& v) { return Tensor({v.size(), 1}, v); }

}  // namespace

SelectionProblem::SelectionProblem(models::ModelConfig proxy_config, models::LanguageModel teacher,
                                   SelectionOptions options)
    : cfg_(proxy_config), teacher_(std::move(teacher)), opt_(options) {
  cfg_.validate();
  opt_.lower.validate();
  if (teacher_.config.vocab_size != cfg_.vocab_size || teacher_.config.seq_len != cfg_.seq_len) {
    throw UsageError("selection: proxy and teacher disagree on vocab or seq_len");
  }
  if (opt_.weight_shards < 1) throw UsageError("weight_shards must be >= 1");
}

weighting::ImportanceWeights SelectionProblem::weights(const ad::ParamVector& theta_s,
                                                       const data::SampleBatch& batch) const {
  const std::vector<double> h = models::score_batch(models::ScoreModel{cfg_, theta_s}, batch);
  return weighting::compute_weights(h, opt_.mode, opt_.weight_shards, opt_.threads);
}

Tensor SelectionProblem::teacher_log_probs(const data::SampleBatch& batch) const {
  const std::size_t rows = cfg_.seq_len;
  const std::size_t v = cfg_.vocab_size;
  std::lock_guard lock(cache_mu_);
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!teacher_cache_.contains(batch.indices[i])) missing.push_back(i);
  }
  if (!missing.empty()) {
    data::SampleBatch sub;
    sub.seq_len = batch.seq_len;
    for (std::size_t i : missing) {
      if (std::find(sub.indices.begin(), sub.indices.end(), batch.indices[i]) != sub.indices.end()) continue;
      sub.indices.push_back(batch.indices[i]);
      const auto r = batch.row(i);
      sub.tokens.insert(sub.tokens.end(), r.begin(), r.end());
    }
    const Tensor lp = models::log_probs(teacher_, sub);
    for (std::size_t j = 0; j < sub.size(); ++j) {
      const double* src = lp.data() + j * rows * v;
      teacher_cache_.emplace(sub.indices[j], std::vector<double>(src, src + rows * v));
    }
  }
  Tensor out = Tensor::matrix(batch.size() * rows, v);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& cached = teacher_cache_.at(batch.indices[i]);
    std::copy(cached.begin(), cached.end(), out.data() + i * rows * v);
  }
  return out;
}

ad::ScalarGraph SelectionProblem::lower_loss(const ad::ParamVector& theta_s, const data::SampleBatch& batch) const {
  if (batch.size() == 0) throw DataError("lower loss: empty batch");
  const Tensor p_const = column(weights(theta_s, batch).weights);
  Tensor teacher;
  if (opt_.lower.gamma > 0.0) teacher = teacher_log_probs(batch);
  return ad::ScalarGraph(
      [cfg = cfg_, opt = opt_, batch, p_const, teacher](ad::Tape& tape, const ad::GraphInputs& in) {
        const Var lp = models::lm_log_probs(tape, in.primary, cfg, batch);
        const Var ce = models::per_sample_ce(lp, batch);
        const Var p = in.secondary_differentiated
                          ? weighting::weights_graph(models::score_forward(tape, in.secondary, cfg, batch), opt.mode)
                          : tape.constant(p_const);
        Var loss = sum_all(mul(p, ce));
        if (opt.lower.gamma > 0.0) loss = add(loss, scale(models::mean_kl(tape, lp, teacher), opt.lower.gamma));
        if (opt.lower.lambda > 0.0) {
          for (const Var& w : in.primary.vars()) loss = add(loss, scale(inner(w, w), opt.lower.lambda));
        }
        return loss;
      },
      theta_s);
}

ad::ScalarGraph SelectionProblem::upper_loss(const data::SampleBatch& batch) const {
  return models::lm_loss(cfg_, batch);
}

std::vector<double> SelectionProblem::contractions(const ad::ParamVector& theta_p, const data::SampleBatch& batch,
                                                   const ad::ParamVector& z) const {
  ad::require_conformant(theta_p, z, "contractions");
  ad::Tape tape;
  const ad::BoundParams p(tape, theta_p);
  // sum_i u_i CE_i is linear in u, so d/du <grad_theta_p, z> is c at any u.
  const Var u = tape.leaf(Tensor::matrix(batch.size(), 1, 1.0));
  const Var ce = models::per_sample_ce(models::lm_log_probs(tape, p, cfg_, batch), batch);
  const Var s = sum_all(mul(u, ce));
  const auto g = tape.gradient(s, p.vars());
  const Var gz = ad::inner_product(g, z, tape);
  const Var u_vars[] = {u};
  const Tensor& c = tape.gradient(gz, u_vars)[0].value();
  std::vector<double> out(c.values().begin(), c.values().end());
  for (double x : out) {
    if (!std::isfinite(x)) throw NumericError("contractions: non-finite value", "c");
  }
  return out;
}

ad::ParamVector SelectionProblem::hypergradient(const ad::ParamVector& theta_p, const ad::ParamVector& theta_s,
                                                const data::SampleBatch& batch, const ad::ParamVector& z) const {
  const weighting::ImportanceWeights w = weights(theta_s, batch);
  const std::vector<double> coeff = weighting::contraction_coefficients(w, contractions(theta_p, batch, z));

  ad::Tape tape;
  const ad::BoundParams s(tape, theta_s);
  const Var h = models::score_forward(tape, s, cfg_, batch);
  const Var total = sum_all(mul(tape.constant(column(coeff)), h));
  ad::ParamVector out = ad::scaled(-1.0, ad::to_param_vector(theta_s, tape.gradient(total, s.vars())));
  if (auto bad = out.first_non_finite()) throw NumericError("hypergradient: non-finite value", *bad);

  if (opt_.cross_check_tol > 0.0) {
    const ad::ParamVector other = mixed_hypergradient(*this, theta_p, theta_s, batch, z);
    const double diff = ad::norm(ad::axpy(-1.0, other, out));
    const double scale_ref = std::max(ad::norm(other), 1e-300);
    if (diff > opt_.cross_check_tol * scale_ref) {
      throw OptimizationError("hypergradient paths disagree: relative difference " + std::to_string(diff / scale_ref),
                              -1);
    }
  }
  return out;
}

double SelectionProblem::kl(const ad::ParamVector& theta_p, const data::SampleBatch& batch) const {
  return models::kl_loss(cfg_, teacher_log_probs(batch), batch).evaluate(theta_p);
}

}  // namespace bliss::bilevel
