// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

// Bilevel test problems with known answers, and tight solvers used to build
// finite-difference references.

#pragma once

#include <cmath>
#include <initializer_list>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bliss/bilevel/bilevel.hpp"
#include "bliss/bilevel/selection.hpp"
#include "bliss/errors.hpp"
#include "support/oracles.hpp"

namespace bliss::testing {

using Dense = Eigen::MatrixXd;

/// Row-major literal.
inline Dense dense(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> values) {
  Dense m(rows, cols);
  auto it = values.begin();
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = *it++;
  }
  return m;
}

inline Dense random_dense(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Dense m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

/// Q diag(eigs) Q^T, Q the orthogonal factor of a Gaussian matrix.
inline Dense spd_with_spectrum(const std::vector<double>& eigs, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(eigs.size());
  const Dense q = Eigen::HouseholderQR<Dense>(random_dense(eigs.size(), eigs.size(), rng)).householderQ();
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(eigs.data(), n);
  return q * d.asDiagonal() * q.transpose();
}

inline std::vector<double> dense_solve(const Dense& a, const std::vector<double>& b) {
  const Eigen::VectorXd x =
      a.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  return {x.data(), x.data() + x.size()};
}

inline ad::ParamVector column_param(const std::string& name, const std::vector<double>& v) {
  ad::ParamVector p;
  p.add(name, ad::Tensor({v.size(), 1}, v));
  return p;
}

inline ad::Tensor to_tensor(const Dense& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  return ad::Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                    std::vector<double>(r.data(), r.data() + r.size()));
}

/// G = 1/2 theta^T H theta on a single [n,1] block.
inline ad::ScalarGraph quadratic_form(const Dense& h) {
  const ad::Tensor ht = to_tensor(h);
  return ad::ScalarGraph([ht](ad::Tape& tape, const ad::GraphInputs& in) {
    const ad::Var x = in.primary.at(0);
    return ad::scale(ad::inner(x, ad::matmul(tape.constant(ht), x)), 0.5);
  });
}

/// g = 1/2 ||theta_p - A theta_s||^2, f = 1/2 ||theta_p||^2. The lower
/// solution is A theta_s and Phi(theta_s) = 1/2 ||A theta_s||^2, so the
/// hypergradient is A^T A theta_s. The batch is ignored.
class QuadraticBilevel : public bilevel::Problem {
 public:
  explicit QuadraticBilevel(Dense a) : a_(std::move(a)), at_(to_tensor(a_)) {}

  ad::ScalarGraph lower_loss(const ad::ParamVector& theta_s, const data::SampleBatch&) const override {
    return ad::ScalarGraph(
        [a = at_](ad::Tape& tape, const ad::GraphInputs& in) {
          const ad::Var r = ad::sub(in.primary.at(0), ad::matmul(tape.constant(a), in.secondary.at(0)));
          return ad::scale(ad::inner(r, r), 0.5);
        },
        theta_s);
  }
  ad::ScalarGraph upper_loss(const data::SampleBatch&) const override {
    return ad::ScalarGraph([](ad::Tape&, const ad::GraphInputs& in) {
      return ad::scale(ad::inner(in.primary.at(0), in.primary.at(0)), 0.5);
    });
  }

  std::vector<double> lower_solution(const std::vector<double>& s) const {
    const Eigen::VectorXd p = a_ * Eigen::Map<const Eigen::VectorXd>(s.data(), a_.cols());
    return {p.data(), p.data() + p.size()};
  }
  std::vector<double> analytic_hypergradient(const std::vector<double>& s) const {
    const Eigen::VectorXd g = a_.transpose() * a_ * Eigen::Map<const Eigen::VectorXd>(s.data(), a_.cols());
    return {g.data(), g.data() + g.size()};
  }
  const Dense& a() const noexcept { return a_; }

 private:
  Dense a_;
  ad::Tensor at_;
};

/// Largest Hessian eigenvalue by power iteration.
inline double power_lambda_max(ad::HvpOperator& h, const ad::ParamVector& like, std::mt19937_64& rng,
                               int iters = 60) {
  ad::ParamVector v = random_like(like, rng);
  double lam = 0.0;
  for (int i = 0; i < iters; ++i) {
    v = ad::scaled(1.0 / ad::norm(v), v);
    const ad::ParamVector hv = h.apply(v);
    lam = ad::dot(v, hv);
    v = hv;
  }
  return lam;
}

/// Dense symmetric Hessian, one Hessian-vector product per column.
inline Dense dense_hessian(ad::HvpOperator& h, const ad::ParamVector& like) {
  const auto n = static_cast<Eigen::Index>(like.num_elements());
  Dense out(n, n);
  ad::ParamVector e = like.zeros_like();
  for (Eigen::Index j = 0; j < n; ++j) {
    element(e, static_cast<std::size_t>(j)) = 1.0;
    const auto col = flatten(h.apply(e));
    element(e, static_cast<std::size_t>(j)) = 0.0;
    out.col(j) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  return 0.5 * (out + out.transpose());
}

/// Minimizes the lower graph over theta_p with damped Newton steps in the
/// Hessian's eigenbasis, using |eigenvalue| and skipping numerically null
/// directions so the iterate never drifts along flat symmetries. Steps are
/// capped at max_step so the solve settles on a minimizer near its start.
/// grad_norm receives the final gradient norm. A small initial damping suits
/// starts next to a minimizer.
inline ad::ParamVector solve_lower(const ad::ScalarGraph& g, ad::ParamVector theta, double tol, double& grad_norm,
                                   double mu = 1.0, int max_iters = 200, double max_step = 0.25) {
  const auto n = static_cast<Eigen::Index>(theta.num_elements());
  for (int it = 0; it < max_iters; ++it) {
    ad::HvpOperator h(g, theta);
    const auto gr = flatten(h.gradient());
    const Eigen::Map<const Eigen::VectorXd> gv(gr.data(), n);
    grad_norm = gv.norm();
    if (grad_norm < tol) break;
    const Eigen::SelfAdjointEigenSolver<Dense> eig(dense_hessian(h, theta));
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseAbs();
    const Eigen::VectorXd proj = eig.eigenvectors().transpose() * gv;
    const double floor = 1e-10 * lam.maxCoeff();
    bool accepted = false;
    for (int tries = 0; tries < 60 && !accepted; ++tries, mu *= 4.0) {
      Eigen::VectorXd coef(n);
      for (Eigen::Index i = 0; i < n; ++i) coef(i) = lam(i) > floor ? proj(i) / (lam(i) + mu) : 0.0;
      Eigen::VectorXd step = eig.eigenvectors() * coef;
      if (step.norm() > max_step) step *= max_step / step.norm();
      const ad::ParamVector cand =
          ad::axpy(-1.0, unflatten(theta, std::vector<double>(step.data(), step.data() + n)), theta);
      double trial = std::numeric_limits<double>::infinity();
      try {
        trial = g.evaluate(cand);
      } catch (const bliss::NumericError&) {
        // overflow; damp harder
      }
      // Near the minimum the loss stops resolving progress; fall back to
      // the gradient norm.
      const bool tie = trial <= h.value() + 4e-16 * std::abs(h.value());
      if (trial < h.value() || (tie && ad::norm(ad::grad(g, cand)) < grad_norm)) {
        theta = cand;
        mu = std::max(mu / 16.0, 1e-12);  // undoes this try's *4 as well
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return theta;
}

/// z with ||H z - a|| < tol, H the lower Hessian at theta_p.
inline ad::ParamVector solve_z(const ad::ScalarGraph& g, const ad::ParamVector& theta_p, const ad::ParamVector& a,
                               double tol, double& residual, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  ad::HvpOperator h(g, theta_p);
  const double lmax = power_lambda_max(h, theta_p, rng);
  bilevel::GdlsConfig cfg;
  cfg.eta = 1.0 / lmax;
  cfg.k_steps = 2000;
  ad::ParamVector z = a.zeros_like();
  for (int round = 0; round < 20; ++round) {
    z = bilevel::gdls(g, theta_p, a, z, cfg).z;
    residual = ad::norm(ad::axpy(-1.0, a, h.apply(z)));
    if (residual < tol) break;
  }
  return z;
}

}  // namespace bliss::testing

namespace bliss::testing {

inline data::SampleBatch random_token_batch(const models::ModelConfig& cfg, std::size_t rows, std::uint64_t seed,
                                            std::size_t first_index = 0) {
  std::mt19937_64 rng(seed);
  data::SampleBatch b;
  b.seq_len = cfg.seq_len;
  for (std::size_t i = 0; i < rows; ++i) {
    b.indices.push_back(first_index + i);
    for (std::size_t t = 0; t < cfg.seq_len; ++t) {
      b.tokens.push_back(static_cast<std::uint32_t>(rng() % cfg.vocab_size));
    }
  }
  return b;
}

/// A small proxy / score / teacher triple with a spread of initial scores.
struct TinySelection {
  models::ModelConfig cfg;
  models::LanguageModel proxy;
  models::ScoreModel score;
  models::LanguageModel teacher;

  TinySelection(models::ModelConfig c, std::uint64_t seed) : cfg(c) {
    proxy = models::make_language_model(cfg, seed);
    teacher = models::make_language_model(cfg, seed + 1000);
    score = models::init_score_from_proxy(proxy);
    std::mt19937_64 rng(seed + 7);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& w : score.params.at("score_head.weight").values()) w = nd(rng);
  }

  bilevel::SelectionProblem problem(bilevel::SelectionOptions opt) const {
    return bilevel::SelectionProblem(cfg, teacher, opt);
  }
};

/// One finite-difference check of the neural hypergradient.
///
/// d_model >= vocab and two sequences of length 3, so the output layer alone
/// can realize any logits on the six positions and every minimizer of G gives
/// the same predictions. lambda = 0 because the residual stream is RMS
/// normalized: any weight penalty pulls the embeddings toward zero with no
/// finite minimizer. F uses the lower batch, so Phi depends on the minimizer
/// only through those predictions and grad F lies in the Hessian's range.
struct NeuralFdResult {
  /// lambda_max / smallest positive eigenvalue of the lower Hessian at the
  /// solution. Instances above the screening bound are not evaluated: plain
  /// gradient descent on H z = a needs O(condition) steps.
  double condition = 0.0;
  bool evaluated = false;
  double lower_grad_norm = 0.0;
  double z_residual = 0.0;
  double hypergrad_norm = 0.0;
  /// |fd - <hyper, d>| / ||hyper|| for d along the hypergradient and along a
  /// random unit direction.
  std::vector<double> errors;
};

inline NeuralFdResult neural_hypergradient_fd(std::uint64_t seed, double max_condition = 1e4, double eps = 1e-4) {
  const TinySelection s({4, 3, 6, 2, 2, models::Family::proxy}, seed);
  bilevel::SelectionOptions opt;
  opt.lower.gamma = 20.0;
  opt.lower.lambda = 0.0;
  const auto prob = s.problem(opt);
  const auto batch = random_token_batch(s.cfg, 2, seed + 40);
  const auto upper = prob.upper_loss(batch);

  NeuralFdResult out;
  double gn = 0.0;
  const auto phi = [&](const ad::ParamVector& theta_s, ad::ParamVector warm) {
    warm = solve_lower(prob.lower_loss(theta_s, batch), std::move(warm), 1e-10, gn, 1e-8);
    return upper.evaluate(warm);
  };
  // The teacher minimizes the dominant KL term, so the solve starts close.
  const ad::ParamVector p_star = solve_lower(prob.lower_loss(s.score.params, batch), s.teacher.params, 1e-10, gn);
  out.lower_grad_norm = gn;

  const auto g = prob.lower_loss(s.score.params, batch);
  ad::HvpOperator h(g, p_star);
  const Eigen::VectorXd lam = Eigen::SelfAdjointEigenSolver<Dense>(dense_hessian(h, p_star)).eigenvalues();
  const double lmax = lam.maxCoeff();
  double lmin = lmax;
  for (double l : lam) {
    if (l > 1e-8 * lmax) lmin = std::min(lmin, l);
  }
  out.condition = lmax / lmin;
  if (out.condition > max_condition) return out;
  out.evaluated = true;

  const auto a = ad::grad(upper, p_star);
  bilevel::GdlsConfig cfg;
  cfg.eta = 1.9 / lmax;
  cfg.k_steps = 2000;
  ad::ParamVector z = a.zeros_like();
  for (int round = 0; round < 200; ++round) {
    z = bilevel::gdls(g, p_star, a, z, cfg).z;
    out.z_residual = ad::norm(ad::axpy(-1.0, a, h.apply(z)));
    if (out.z_residual < 5e-9) break;
  }
  const ad::ParamVector hyper = prob.hypergradient(p_star, s.score.params, batch, z);
  out.hypergrad_norm = ad::norm(hyper);

  std::mt19937_64 rng(seed);
  for (int dir = 0; dir < 2; ++dir) {
    ad::ParamVector d = dir == 0 ? hyper : random_like(hyper, rng);
    d = ad::scaled(1.0 / ad::norm(d), d);
    const double fd = (phi(ad::axpy(eps, d, s.score.params), p_star) -
                       phi(ad::axpy(-eps, d, s.score.params), p_star)) / (2.0 * eps);
    out.errors.push_back(std::abs(fd - ad::dot(hyper, d)) / out.hypergrad_norm);
  }
  return out;
}

}  // namespace bliss::testing
