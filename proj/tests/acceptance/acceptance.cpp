// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Arguments select criteria by number; none runs all.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bliss/cli/config.hpp"
#include "bliss/models/train.hpp"
#include "bliss/pipeline/pipeline.hpp"
#include "bliss/weighting/weights.hpp"
#include "support/bilevel_oracles.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_fixtures.hpp"
#include "support/tiny_net.hpp"

namespace {

using namespace bliss;
namespace bt = bliss::testing;
namespace fs = std::filesystem;

// Smallest per-seed clean-fraction margin (bliss minus random, last round)
// recorded by the first verified run of the desk experiment.
constexpr double kGoldenCleanMargin = 0.486;
constexpr double kMarginSlack = 0.05;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double fd_rel_error(const ad::ScalarGraph& g, const ad::ParamVector& at) {
  const auto ad_grad = bt::flatten(ad::grad(g, at));
  const auto fd = bt::flatten(bt::fd_gradient([&](const ad::ParamVector& p) { return g.evaluate(p); }, at, 1e-5));
  return bt::relative_error(ad_grad, fd);
}

bilevel::SelectionOptions selection_opts(double gamma, double lambda, weighting::Mode mode = weighting::Mode::softmax) {
  bilevel::SelectionOptions o;
  o.lower.gamma = gamma;
  o.lower.lambda = lambda;
  o.lower.eta1 = 0.1;
  o.mode = mode;
  return o;
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradients() {
  Stopwatch clock;
  double worst = 0.0;
  int instances = 0;
  auto record = [&](double e) {
    worst = std::max(worst, e);
    ++instances;
  };
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto k = static_cast<std::uint32_t>(seed);
    const models::ModelConfig cfg{5 + k % 3, 3 + k % 2, 4, 1 + k % 2, 2, models::Family::proxy};
    const auto batch = bt::random_token_batch(cfg, 3, seed + 50);

    const auto lm = models::make_language_model(cfg, seed);
    record(fd_rel_error(models::lm_loss(cfg, batch), lm.params));

    auto tcfg = cfg;
    tcfg.family = models::Family::target;
    const auto teacher = models::make_language_model(tcfg, seed + 100);
    record(fd_rel_error(models::kl_loss(lm, teacher, batch), lm.params));

    const bt::TinySelection s(cfg, seed + 200);
    record(fd_rel_error(s.problem(selection_opts(0.5, 0.01)).lower_loss(s.score.params, batch), s.proxy.params));

    std::mt19937_64 rng(seed + 300);
    std::normal_distribution<double> nd;
    std::vector<double> c(batch.size());
    for (double& v : c) v = nd(rng);
    const ad::ScalarGraph head([cfg, batch, c](ad::Tape& tape, const ad::GraphInputs& in) {
      const ad::Var h = models::score_forward(tape, in.primary, cfg, batch);
      return ad::inner(h, tape.constant(ad::Tensor({c.size(), 1}, c)));
    });
    record(fd_rel_error(head, s.score.params));
  }
  const double t = clock.seconds();
  return {worst < 1e-4 && instances >= 20 && t < 60.0,
          fmt("worst relative error %.2e over %d instances, %.1f s", worst, instances, t)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome hvps() {
  Stopwatch clock;
  const bt::TinyNet net;
  const ad::ScalarGraph loss = net.loss();
  const std::size_t n = net.init(0).num_elements();
  std::mt19937_64 rng(9);
  double worst_hv = 0.0, worst_sym = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ad::ParamVector theta = net.init(seed);
    const auto h = bt::fd_hessian([&](const ad::ParamVector& p) { return ad::grad(loss, p); }, theta, 1e-5);
    const ad::ParamVector u = bt::random_like(theta, rng);
    const ad::ParamVector v = bt::random_like(theta, rng);
    const ad::ParamVector hu = ad::hvp(loss, theta, u);
    const ad::ParamVector hv = ad::hvp(loss, theta, v);
    worst_hv = std::max(worst_hv, bt::max_abs_diff(bt::flatten(hv), bt::matvec(h, bt::flatten(v))));
    worst_sym = std::max(worst_sym, std::abs(ad::dot(u, hv) - ad::dot(v, hu)));
  }
  const double t = clock.seconds();
  return {n <= 50 && worst_hv < 1e-8 && worst_sym < 1e-8 && t < 60.0,
          fmt("%zu parameters, |Hv - hvp| %.2e, asymmetry %.2e, %.1f s", n, worst_hv, worst_sym, t)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome gdls() {
  bilevel::GdlsConfig cfg;
  cfg.eta = 0.1;
  cfg.k_steps = 3;
  const auto res = bilevel::gdls(bt::quadratic_form(bt::dense(2, 2, {1, 0, 0, 2})), bt::column_param("x", {0, 0}),
                                 bt::column_param("x", {1, 2}), bt::column_param("x", {0, 0}), cfg);
  double z[2] = {0, 0};
  const double a[2] = {1, 2}, d[2] = {1, 2};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 2; ++i) z[i] = std::fma(-0.1, d[i] * z[i] - a[i], z[i]);
  }
  const auto out = bt::flatten(res.z);
  const bool example = out[0] == z[0] && out[1] == z[1] && std::abs(out[0] - 0.271) < 1e-15 &&
                       std::abs(out[1] - 0.488) < 1e-15;

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> eig(0.1, 5.0), frac(0.05, 0.99);
  int increases = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> eigs(10);
    for (double& e : eigs) e = eig(rng);
    const double lmax = *std::max_element(eigs.begin(), eigs.end());
    const bt::Dense h = bt::spd_with_spectrum(eigs, rng);
    std::vector<double> av(10);
    for (double& x : av) x = eig(rng) - 2.5;
    const auto zstar = bt::dense_solve(h, av);
    bilevel::GdlsConfig c;
    c.eta = frac(rng) * 2.0 / lmax;
    c.k_steps = 1;
    c.guard = false;
    const auto av_p = bt::column_param("x", av);
    const auto g = bt::quadratic_form(h);
    auto zp = av_p.zeros_like();
    double prev = 0.0;
    for (double v : zstar) prev += v * v;
    prev = std::sqrt(prev);
    for (int k = 0; k < 50; ++k) {
      zp = bilevel::gdls(g, av_p.zeros_like(), av_p, zp, c).z;
      const auto zf = bt::flatten(zp);
      double err = 0.0;
      for (std::size_t i = 0; i < 10; ++i) err += (zf[i] - zstar[i]) * (zf[i] - zstar[i]);
      err = std::sqrt(err);
      if (err > prev * (1 + 1e-12)) ++increases;
      prev = err;
    }
  }
  return {example && increases == 0,
          fmt("z = (%.17g, %.17g), %s hand iteration; %d error increases over 50 SPD systems", out[0], out[1],
              example ? "equal to" : "differs from", increases)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome quadratic_oracle() {
  const data::SampleBatch none{};
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 5, m = 1 + rng() % 4;
    const bt::QuadraticBilevel q(bt::random_dense(n, m, rng));
    const auto sv = bt::flatten(bt::random_like(bt::column_param("s", std::vector<double>(m)), rng));
    const auto s = bt::column_param("s", sv);
    const auto p = bt::column_param("p", q.lower_solution(sv));
    bilevel::GdlsConfig exact;
    exact.eta = 1.0;
    exact.k_steps = 1;
    const auto a = ad::grad(q.upper_loss(none), p);
    const auto z = bilevel::gdls(q.lower_loss(s, none), p, a, a.zeros_like(), exact).z;
    worst = std::max(worst, bt::max_abs_diff(bt::flatten(q.hypergradient(p, s, none, z)), q.analytic_hypergradient(sv)));
  }

  const bt::QuadraticBilevel q(bt::dense(3, 2, {1.0, 0.2, 0.1, 1.0, 0.3, 0.4}));
  bilevel::BilevelConfig cfg;
  cfg.lower.eta1 = 1.0;
  cfg.lower.gamma = 0.0;
  cfg.lower.lambda = 0.0;
  cfg.gdls.eta = 1.0;
  cfg.gdls.k_steps = 1;
  cfg.upper.eta3 = 0.4;
  cfg.upper.t_steps = 500;
  const data::TokenDataset rows(2, 2, {0, 1, 1, 0});
  bilevel::BilevelState st{bt::column_param("p", {0, 0, 0}), bt::column_param("s", {1.5, -2.0}), {}, 0};
  const auto end = bilevel::run_bilevel(q, st, rows, rows, cfg, 1);
  const auto g = q.analytic_hypergradient(bt::flatten(end.theta_s));
  const double gn = std::hypot(g[0], g[1]);
  return {worst < 1e-10 && gn < 1e-6,
          fmt("max |hyper - A^T A s| %.2e over 100 instances; |grad Phi| %.2e after 500 steps", worst, gn)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome neural_fd() {
  Stopwatch clock;
  int evaluated = 0, screened = 0;
  double worst = 0.0, worst_gn = 0.0, worst_res = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 0; evaluated < 10 && seed < 40; ++seed) {
    const auto r = bt::neural_hypergradient_fd(seed);
    if (!r.evaluated) {
      ++screened;
      continue;
    }
    ++evaluated;
    worst_gn = std::max(worst_gn, r.lower_grad_norm);
    worst_res = std::max(worst_res, r.z_residual);
    for (double e : r.errors) worst = std::max(worst, e);
    ok = ok && r.lower_grad_norm < 1e-8 && r.z_residual < 1e-8 && r.hypergrad_norm > 0.0;
  }
  const double t = clock.seconds();
  return {ok && evaluated == 10 && worst < 1e-2 && t < 600.0,
          fmt("%d instances (%d ill-conditioned skipped), worst relative error %.2e, lower grad norm %.1e, "
              "solve residual %.1e, %.0f s",
              evaluated, screened, worst, worst_gn, worst_res, t)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome dual_path() {
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto mode = trial % 2 == 0 ? weighting::Mode::softmax : weighting::Mode::naive;
    const bt::TinySelection s({5, 3, 4, 1, 2, models::Family::proxy}, 100 + trial);
    const auto prob = s.problem(selection_opts(0.1, 1e-3, mode));
    const auto batch = bt::random_token_batch(s.cfg, 2 + trial % 7, 300 + trial);
    const auto z = bt::random_like(s.proxy.params, rng);
    const auto closed = bt::flatten(prob.hypergradient(s.proxy.params, s.score.params, batch, z));
    const auto mixed = bt::flatten(bilevel::mixed_hypergradient(prob, s.proxy.params, s.score.params, batch, z));
    worst = std::max(worst, bt::max_abs_diff(closed, mixed));
  }

  ad::ParamVector layout;
  layout.add("w", ad::Tensor({5}));
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst_const = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(6);
    for (double& v : h) v = u(rng);
    std::vector<ad::ParamVector> hg;
    for (int i = 0; i < 6; ++i) hg.push_back(bt::random_like(layout, rng));
    const std::vector<double> c(6, u(rng) * 10.0);
    const auto out = weighting::weight_jacobian_contraction(weighting::softmax_weights(h), hg, c);
    for (double v : out.tensor(0).values()) worst_const = std::max(worst_const, std::abs(v));
  }
  return {worst < 1e-8 && worst_const <= 1e-12,
          fmt("closed form vs mixed path %.2e over 100 instances; constant contraction %.2e", worst, worst_const)};
}

// ---- 7 ----------------------------------------------------------------------

Outcome sharded_softmax() {
  double worst = 0.0, worst_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> s(64);
    for (double& v : s) v = u(rng);
    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = 7 * i;
    const auto mono = weighting::softmax_weights(s).weights;
    for (std::size_t k : {1u, 2u, 4u, 8u}) {
      const auto w =
          weighting::sharded_weights(weighting::split_scores(s, idx, weighting::ShardLayout::even(64, k)), 4).weights;
      worst = std::max(worst, bt::max_abs_diff(w, mono));
      double total = 0.0;
      for (double v : w) total += v;
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  return {worst < 1e-12 && worst_sum < 1e-10,
          fmt("max deviation from monolithic %.2e, max |sum - 1| %.2e over 50 batches x 4 layouts", worst, worst_sum)};
}

// ---- 8, 9, 10 -----------------------------------------------------------------

const std::vector<std::uint64_t> kDeskSeeds{0, 1, 2};

cli::Settings desk_settings() {
  cli::Settings s = cli::default_settings();
  cli::apply_config_file(s, fs::path(BLISS_SOURCE_DIR) / "configs" / "desk.cfg");
  return s;
}

struct DeskRun {
  pipeline::ExperimentConfig cfg;
  pipeline::ExperimentReport report;
  double seconds = 0.0;
};

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    DeskRun d;
    d.cfg = desk_settings().experiment;
    const fs::path dir = bt::scratch_dir("acceptance_desk");
    Stopwatch clock;
    d.report = pipeline::run_experiment(d.cfg, kDeskSeeds, dir);
    d.seconds = clock.seconds();
    fs::remove_all(dir);
    return d;
  }();
  return run;
}

Outcome selection_quality() {
  const DeskRun& d = desk_run();
  const std::size_t last = d.cfg.round.rounds - 1;
  bool beats = true, high = true;
  double min_margin = 1.0;
  std::string per_seed;
  for (std::uint64_t seed : kDeskSeeds) {
    const double b = *d.report.find(seed, pipeline::Arm::bliss).rounds[last].clean_fraction;
    const double r = *d.report.find(seed, pipeline::Arm::random).rounds[last].clean_fraction;
    beats = beats && b > r;
    high = high && b >= 0.8;
    min_margin = std::min(min_margin, b - r);
    per_seed += fmt(" %.3f/%.3f", b, r);
  }
  const bool golden = min_margin >= kGoldenCleanMargin - kMarginSlack;
  return {beats && high && golden && d.seconds < 900.0,
          fmt("clean fraction bliss/random per seed:%s; min margin %.3f (golden %.3f); experiment %.0f s",
              per_seed.c_str(), min_margin, kGoldenCleanMargin, d.seconds)};
}

Outcome distillation() {
  const DeskRun& d = desk_run();
  bool ok = true;
  int rounds = 0;
  double worst = 0.0;
  for (std::uint64_t seed : kDeskSeeds) {
    for (const auto& r : d.report.find(seed, pipeline::Arm::bliss).rounds) {
      if (!r.kl_start) continue;
      ++rounds;
      const double ratio = *r.kl_end / *r.kl_start;
      worst = std::max(worst, ratio);
      ok = ok && ratio < 0.5;
    }
  }
  return {ok && rounds > 0, fmt("worst KL end/start ratio %.3f over %d bilevel rounds", worst, rounds)};
}

Outcome matched_budget() {
  const DeskRun& d = desk_run();
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed : kDeskSeeds) {
    const double b = d.report.find(seed, pipeline::Arm::bliss).rounds.back().cross_entropy;
    const double r = d.report.find(seed, pipeline::Arm::random).rounds.back().cross_entropy;
    wins += b < r ? 1 : 0;
    per_seed += fmt(" %.4f/%.4f", b, r);
  }
  return {wins == static_cast<int>(kDeskSeeds.size()),
          fmt("bliss below random in %d/%zu seeds; held-out cross-entropy bliss/random:%s", wins, kDeskSeeds.size(),
              per_seed.c_str())};
}

// ---- 11 ---------------------------------------------------------------------

Outcome determinism() {
  const fs::path root = bt::scratch_dir("acceptance_determinism");
  const fs::path out = root / "out";
  const std::string base = std::string(BLISS_CLI_PATH) + " run --config " +
                           (fs::path(BLISS_SOURCE_DIR) / "configs" / "desk.cfg").string() +
                           " --seed 7 --out-dir " + out.string() +
                           " --set num_seqs=2000 bilevel_steps=20 retrain_steps=40 warmup_steps=20 weight_shards=4";
  std::vector<std::map<std::string, std::string>> trees;
  bool ran = true;
  for (const char* extra : {" shard_parallelism=1", " shard_parallelism=1", " shard_parallelism=4"}) {
    fs::remove_all(out);
    const int status = std::system((base + extra + " > /dev/null").c_str());
    ran = ran && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    trees.push_back(bt::snapshot_tree(out));
  }
  fs::remove_all(root);
  const bool repeat = trees[0] == trees[1];
  const bool parallel = trees[0] == trees[2];
  return {ran && repeat && parallel && !trees[0].empty(),
          fmt("%zu files; repeat %s, shard_parallelism 1 vs 4 %s", trees[0].size(), repeat ? "identical" : "differs",
              parallel ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"Hessian-vector products", hvps},
      {"linear-system solver", gdls},
      {"quadratic bilevel oracle", quadratic_oracle},
      {"neural hypergradient vs finite differences", neural_fd},
      {"closed-form vs autodiff hypergradient", dual_path},
      {"sharded softmax", sharded_softmax},
      {"end-to-end selection quality", selection_quality},
      {"distillation alignment", distillation},
      {"matched-budget improvement", matched_budget},
      {"determinism", determinism},
  };
  std::vector<std::size_t> chosen;
  for (int i = 1; i < argc; ++i) {
    const long k = std::strtol(argv[i], nullptr, 10);
    if (k < 1 || k > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    chosen.push_back(static_cast<std::size_t>(k));
  }
  if (chosen.empty()) {
    for (std::size_t k = 1; k <= criteria.size(); ++k) chosen.push_back(k);
  }
  int failures = 0;
  for (std::size_t k : chosen) {
    const auto& [name, fn] = criteria[k - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%-4s criterion %2zu (%s): %s\n", o.pass ? "PASS" : "FAIL", k, name.c_str(), o.detail.c_str());
  }
  return failures == 0 ? 0 : 1;
}
