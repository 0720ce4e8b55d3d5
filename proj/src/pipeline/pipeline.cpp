// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/pipeline/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bliss/autodiff/checkpoint.hpp"
#include "bliss/bilevel/selection.hpp"
#include "bliss/data/sampling.hpp"
#include "bliss/errors.hpp"
#include "bliss/parallel.hpp"
#include "bliss/rng.hpp"

namespace bliss::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kChunk = 32;

/// Runs a stage body and tags any failure with the stage name.
template <typename Fn>
auto in_stage(const char* stage, std::size_t r, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw Error(std::string(stage) + " (round " + std::to_string(r) + "): " + e.what());
  }
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw UsageError("missing stage input " + p.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_score(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", s);
  return buf;
}

data::SampleBatch probe_batch(const ExperimentConfig& cfg, const data::TokenDataset& validation) {
  const std::size_t n = std::min(cfg.probe_rows, validation.size());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return data::make_batch(validation, rows);
}

/// Plain-SGD distillation of the proxy toward the teacher on the subset.
void distill(models::LanguageModel& proxy, const models::LanguageModel& teacher, const data::TokenDataset& subset,
             std::size_t steps, double lr, std::size_t batch_size, std::uint64_t seed) {
  if (steps == 0) return;
  data::BatchIterator it(subset, std::min(batch_size, subset.size()), seed);
  for (std::size_t s = 0; s < steps; ++s) {
    auto [loss, g] = ad::value_and_grad(models::kl_loss(proxy, teacher, it.next()), proxy.params);
    if (!std::isfinite(loss)) throw OptimizationError("non-finite distillation loss", static_cast<long>(s));
    ad::axpy_inplace(-lr, g, proxy.params);
  }
}

json metrics_json(const bilevel::StepMetrics& m) {
  return {{"t", m.t},
          {"lower_loss", m.lower_loss},
          {"upper_loss", m.upper_loss},
          {"kl", m.kl},
          {"hypergrad_norm", m.hypergrad_norm},
          {"z_residual", m.z_residual}};
}

std::string metrics_jsonl(const std::vector<bilevel::StepMetrics>& ms) {
  std::string out;
  for (const auto& m : ms) out += metrics_json(m).dump() + "\n";
  return out;
}

std::string losses_csv(const std::vector<bilevel::StepMetrics>& ms) {
  std::ostringstream out;
  out.precision(17);
  out << "step,lower_loss,upper_loss,kl\n";
  for (const auto& m : ms) out << m.t << ',' << m.lower_loss << ',' << m.upper_loss << ',' << m.kl << '\n';
  return out.str();
}

std::string retrain_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
  return out.str();
}

json evaluation_json(const Evaluation& e) {
  json j = {{"cross_entropy", e.cross_entropy}, {"perplexity", e.perplexity}};
  j["clean_fraction"] = e.clean_fraction ? json(*e.clean_fraction) : json(nullptr);
  return j;
}

fs::path warm_dir(const fs::path& dir) { return dir / "warmup"; }
fs::path data_dir(const fs::path& dir) { return dir / "data"; }

Snapshots read_warm(const fs::path& dir) {
  const fs::path w = warm_dir(dir);
  for (const char* f : {"proxy.blpv", "score.blpv", "target.blpv"}) require_file(w / f);
  return {models::load_language_model(w / "proxy.blpv"), models::load_score_model(w / "score.blpv"),
          models::load_language_model(w / "target.blpv")};
}

/// Target entering round r.
models::LanguageModel read_prev_target(const fs::path& dir, std::size_t r) {
  const fs::path p = r == 0 ? warm_dir(dir) / "target.blpv" : round_dir(dir, r - 1) / "target.blpv";
  require_file(p);
  return models::load_language_model(p);
}

/// Score model entering round r under the score-init policy.
models::ScoreModel read_score_in(const ExperimentConfig& cfg, const fs::path& dir, std::size_t r) {
  const bool from_warm = r == 0 || cfg.round.score_init == ScoreInit::reset_to_round1;
  const fs::path p = from_warm ? warm_dir(dir) / "score.blpv" : round_dir(dir, r - 1) / "score.blpv";
  require_file(p);
  return models::load_score_model(p);
}

void check_round(const ExperimentConfig& cfg, std::size_t r) {
  if (r >= cfg.round.rounds) {
    throw UsageError("round " + std::to_string(r) + " out of range for " + std::to_string(cfg.round.rounds) +
                     " rounds");
  }
}

}  // namespace

std::string to_string(Arm arm) { return arm == Arm::bliss ? "bliss" : "random"; }

Arm parse_arm(const std::string& s) {
  if (s == "bliss") return Arm::bliss;
  if (s == "random") return Arm::random;
  throw UsageError("unknown arm '" + s + "'");
}

void RoundConfig::validate() const {
  if (rounds < 1) throw UsageError("rounds must be at least 1");
  if (!(select_fraction > 0.0 && select_fraction <= 1.0)) throw UsageError("select_fraction must lie in (0, 1]");
  if (!(bilevel_fraction > 0.0 && bilevel_fraction <= 1.0)) throw UsageError("bilevel_fraction must lie in (0, 1]");
  if (!(eta4 >= 0.0) || !(warmup_lr >= 0.0)) throw UsageError("learning rates must be non-negative");
  if (retrain_batch < 1 || warmup_batch < 1) throw UsageError("batch sizes must be at least 1");
  if (proxy_reset == ProxyReset::periodic && reset_every < 1) throw UsageError("reset_every must be at least 1");
}

void ExperimentConfig::validate() const {
  proxy.validate();
  target.validate();
  bilevel.validate();
  round.validate();
  if (proxy.family != models::Family::proxy || target.family != models::Family::target) {
    throw UsageError("model families are fixed: proxy and target");
  }
  for (const auto* m : {&proxy, &target}) {
    if (m->vocab_size != corpus.vocab || m->seq_len != corpus.seq_len) {
      throw UsageError("model vocab/seq_len must match the corpus");
    }
  }
  if (corpus.num_seqs < round.rounds) throw UsageError("num_seqs must be at least rounds");
  if (validation_rows < 1 || heldout_rows < 1) throw UsageError("validation and heldout sets must be non-empty");
  if (weight_shards < 1) throw UsageError("weight_shards must be at least 1");
}

std::size_t ExperimentConfig::threads() const { return effective_threads(shard_parallelism); }

models::LanguageModel as_stored(models::LanguageModel m) {
  m.params = ad::round_to_f32(m.params);
  return m;
}

models::ScoreModel as_stored(models::ScoreModel m) {
  m.params = ad::round_to_f32(m.params);
  return m;
}

double as_stored(double score) { return std::strtod(format_score(score).c_str(), nullptr); }

Corpora make_corpora(const ExperimentConfig& cfg, std::uint64_t seed) {
  data::CorpusSpec train = cfg.corpus;
  train.seed = seed;
  data::CorpusSpec val = cfg.corpus;
  val.num_seqs = cfg.validation_rows;
  val.noise_fraction = 0.0;
  val.seed = derive(seed, Stream::validation);
  data::CorpusSpec held = val;
  held.num_seqs = cfg.heldout_rows;
  held.seed = derive(seed, Stream::heldout);
  return {data::make_synthetic_corpus(train), data::make_synthetic_corpus(val).data,
          data::make_synthetic_corpus(held).data};
}

Snapshots warmup_all(const ExperimentConfig& cfg, const data::TokenDataset& train, std::uint64_t seed) {
  models::TrainConfig tc;
  tc.steps = cfg.round.warmup_steps;
  tc.lr = cfg.round.warmup_lr;
  tc.batch_size = cfg.round.warmup_batch;
  tc.optimizer = cfg.round.warmup_optimizer;
  models::LanguageModel proxy = models::make_language_model(cfg.proxy, seed);
  models::LanguageModel target = models::make_language_model(cfg.target, seed);
  if (tc.steps > 0) {
    models::warmup_train(proxy, train, tc, seed);
    models::warmup_train(target, train, tc, seed);
  }
  proxy = as_stored(std::move(proxy));
  target = as_stored(std::move(target));
  models::ScoreModel score = models::init_score_from_proxy(proxy);
  return {std::move(proxy), std::move(score), std::move(target)};
}

data::TokenDataset round_shard(const ExperimentConfig& cfg, const data::TokenDataset& train, std::size_t r) {
  check_round(cfg, r);
  return data::partition_shards(train.size(), cfg.round.rounds).shard(train, r);
}

bool runs_bilevel(const ExperimentConfig& cfg, std::size_t r) { return cfg.arm == Arm::bliss && r >= 1; }

BilevelOutcome train_score_model(const ExperimentConfig& cfg, const models::LanguageModel& proxy0,
                                 const models::ScoreModel& score_in, const models::LanguageModel& teacher,
                                 const data::TokenDataset& shard, const data::TokenDataset& validation,
                                 std::size_t r, std::uint64_t seed) {
  const data::TokenDataset subset =
      data::sample_bilevel_subset(shard, cfg.round.bilevel_fraction, derive(seed, Stream::bilevel_subset, r));
  const bool periodic = cfg.round.proxy_reset == ProxyReset::periodic;

  bilevel::BilevelConfig bc = cfg.bilevel;
  bilevel::SelectionOptions opt;
  opt.lower = bc.lower;
  if (periodic) {
    opt.lower.inner_steps = cfg.round.periodic_inner_steps;
    if (cfg.round.periodic_drop_kl) opt.lower.gamma = 0.0;
    bc.lower = opt.lower;
  }
  opt.mode = cfg.mode;
  opt.weight_shards = cfg.weight_shards;
  opt.threads = cfg.threads();
  const bilevel::SelectionProblem problem(cfg.proxy, teacher, opt);

  const data::SampleBatch probe = probe_batch(cfg, validation);
  BilevelOutcome out;
  out.kl_start = models::evaluate_kl(proxy0, teacher, probe);

  bilevel::BilevelState state{proxy0.params, score_in.params, {}, 0};
  const auto sink = [&out](const bilevel::StepMetrics& m) { out.metrics.push_back(m); };
  const std::uint64_t round_seed = derive(seed, Stream::bilevel_batches, r);
  if (!periodic) {
    state = bilevel::run_bilevel(problem, std::move(state), subset, validation, bc, round_seed, sink);
  } else {
    const std::size_t total = cfg.bilevel.upper.t_steps;
    std::size_t chunk = 0;
    for (std::size_t done = 0; done < total || chunk == 0; ++chunk) {
      models::LanguageModel p{cfg.proxy, proxy0.params};
      distill(p, teacher, subset, cfg.round.distill_steps, bc.lower.eta1, bc.batch_size,
              Rng::derive(seed, {static_cast<std::uint64_t>(Stream::distill), r, chunk}));
      state.theta_p = std::move(p.params);
      state.z = {};
      bilevel::BilevelConfig part = bc;
      part.upper.t_steps = std::min(cfg.round.reset_every, total - done);
      const std::uint64_t chunk_seed = chunk == 0 ? round_seed : Rng::derive(round_seed, {chunk});
      state = bilevel::run_bilevel(problem, std::move(state), subset, validation, part, chunk_seed, sink);
      done += part.upper.t_steps;
      if (total == 0) break;
    }
  }
  out.proxy = as_stored(models::LanguageModel{cfg.proxy, std::move(state.theta_p)});
  out.score = as_stored(models::ScoreModel{score_in.config, std::move(state.theta_s)});
  out.kl_end = models::evaluate_kl(out.proxy, teacher, probe);
  return out;
}

InfluenceTable infer_scores(const models::ScoreModel& score, const data::TokenDataset& shard, std::size_t threads) {
  InfluenceTable t;
  t.indices.assign(shard.source_indices().begin(), shard.source_indices().end());
  t.scores.resize(shard.size());
  const std::size_t chunks = (shard.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t n = std::min(kChunk, shard.size() - begin);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), begin);
    const auto s = models::score_batch(score, data::make_batch(shard, rows));
    std::copy(s.begin(), s.end(), t.scores.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return t;
}

InfluenceTable random_scores(const data::TokenDataset& shard, std::uint64_t seed, std::size_t r) {
  InfluenceTable t;
  t.indices.assign(shard.source_indices().begin(), shard.source_indices().end());
  t.scores.reserve(shard.size());
  Rng rng(derive(seed, Stream::random_scores, r));
  // Midpoints of 2^-53 cells keep every score strictly inside (0, 1).
  for (std::size_t i = 0; i < shard.size(); ++i) {
    t.scores.push_back((static_cast<double>(rng.next() >> 11) + 0.5) * 0x1.0p-53);
  }
  return t;
}

SelectionResult select_topk(const InfluenceTable& table, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("selection fraction must lie in (0, 1]");
  if (table.indices.size() != table.scores.size()) throw ShapeError("influence table: index/score count mismatch");
  const std::size_t n = table.size();
  if (n == 0) return {};
  // ceil, but a product that is an integer up to rounding stays that integer
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  const auto k = static_cast<std::size_t>(std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table.scores[a] != table.scores[b]) return table.scores[a] > table.scores[b];
    return table.indices[a] < table.indices[b];
  });
  SelectionResult out;
  out.cutoff = table.scores[order[k - 1]];
  out.indices.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.indices.push_back(table.indices[order[i]]);
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

RetrainOutcome retrain_target(const ExperimentConfig& cfg, models::LanguageModel target,
                              const data::TokenDataset& train, const SelectionResult& selection, std::size_t r,
                              std::uint64_t seed) {
  if (selection.indices.empty()) throw UsageError("retrain: empty selection");
  const data::TokenDataset chosen = train.subset(selection.indices);
  models::TrainConfig tc;
  tc.steps = cfg.round.retrain_steps;
  tc.lr = cfg.round.eta4;
  tc.batch_size = cfg.round.retrain_batch;
  tc.optimizer = models::Optimizer::sgd;
  RetrainOutcome out;
  out.losses.reserve(tc.steps);
  models::train_lm(target, chosen, tc, derive(seed, Stream::retrain, r),
                   [&out](std::size_t, double loss) { out.losses.push_back(loss); });
  out.target = as_stored(std::move(target));
  return out;
}

Evaluation evaluate(const models::LanguageModel& target, const data::TokenDataset& heldout,
                    const SelectionResult* selection, const std::vector<data::Provenance>* labels,
                    std::size_t threads) {
  if (heldout.empty()) throw UsageError("evaluate: empty held-out set");
  std::vector<double> losses(heldout.size());
  const std::size_t chunks = (heldout.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t n = std::min(kChunk, heldout.size() - begin);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), begin);
    const auto l = models::per_sample_loss(target, data::make_batch(heldout, rows));
    std::copy(l.begin(), l.end(), losses.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  Evaluation e;
  for (double l : losses) e.cross_entropy += l;
  e.cross_entropy /= static_cast<double>(losses.size());
  e.perplexity = std::exp(e.cross_entropy);
  if (selection != nullptr && labels != nullptr && !selection->indices.empty()) {
    std::size_t clean = 0;
    for (std::size_t i : selection->indices) {
      if (i >= labels->size()) throw UsageError("evaluate: selected index out of label range");
      clean += (*labels)[i] == data::Provenance::clean;
    }
    e.clean_fraction = static_cast<double>(clean) / static_cast<double>(selection->indices.size());
  }
  return e;
}

RoundState run_round(const ExperimentConfig& cfg, std::size_t r, const Snapshots& warm, const RoundState* prev,
                     const Corpora& corpora, std::uint64_t seed) {
  check_round(cfg, r);
  if ((r == 0) != (prev == nullptr)) throw UsageError("run_round: previous round required exactly when r > 0");
  const data::TokenDataset& train = corpora.train.data;
  const data::TokenDataset shard = round_shard(cfg, train, r);
  const models::LanguageModel& teacher = prev != nullptr ? prev->target : warm.target;
  const bool from_warm = prev == nullptr || cfg.round.score_init == ScoreInit::reset_to_round1;
  const models::ScoreModel& score_in = from_warm ? warm.score : prev->score;

  RoundState st;
  st.round = r;
  if (runs_bilevel(cfg, r)) {
    st.bilevel = in_stage("bilevel", r, [&] {
      return train_score_model(cfg, warm.proxy, score_in, teacher, shard, corpora.validation, r, seed);
    });
    st.proxy = st.bilevel->proxy;
    st.score = st.bilevel->score;
    st.table = in_stage("score", r, [&] { return infer_scores(st.score, shard, cfg.threads()); });
  } else {
    st.proxy = warm.proxy;
    st.score = score_in;
    st.table = random_scores(shard, seed, r);
  }
  for (double& s : st.table.scores) s = as_stored(s);
  st.selection = select_topk(st.table, cfg.round.select_fraction);
  RetrainOutcome re =
      in_stage("retrain", r, [&] { return retrain_target(cfg, teacher, train, st.selection, r, seed); });
  st.target = std::move(re.target);
  st.retrain_losses = std::move(re.losses);
  st.evaluation = in_stage("evaluate", r, [&] {
    return evaluate(st.target, corpora.heldout, &st.selection,
                    corpora.train.labels ? &*corpora.train.labels : nullptr, cfg.threads());
  });
  return st;
}

fs::path round_dir(const fs::path& dir, std::size_t r) { return dir / ("round_" + std::to_string(r)); }

void write_corpora(const fs::path& dir, const Corpora& c) {
  const fs::path d = data_dir(dir);
  fs::create_directories(d);
  data::save_dataset(d / "train.bltd", c.train);
  data::save_dataset(d / "validation.bltd", {c.validation, std::nullopt});
  data::save_dataset(d / "heldout.bltd", {c.heldout, std::nullopt});
}

Corpora read_corpora(const fs::path& dir) {
  const fs::path d = data_dir(dir);
  for (const char* f : {"train.bltd", "validation.bltd", "heldout.bltd"}) require_file(d / f);
  return {data::load_dataset(d / "train.bltd"), data::load_dataset(d / "validation.bltd").data,
          data::load_dataset(d / "heldout.bltd").data};
}

void stage_gen_data(const ExperimentConfig& cfg, const fs::path& dir, std::uint64_t seed) {
  write_corpora(dir, make_corpora(cfg, seed));
}

void stage_warmup(const ExperimentConfig& cfg, const fs::path& dir, std::uint64_t seed) {
  const Corpora c = read_corpora(dir);
  const Snapshots s = in_stage("warmup", 0, [&] { return warmup_all(cfg, c.train.data, seed); });
  const fs::path w = warm_dir(dir);
  fs::create_directories(w);
  models::save_model(w / "proxy.blpv", s.proxy.config, s.proxy.params);
  models::save_model(w / "score.blpv", s.score.config, s.score.params);
  models::save_model(w / "target.blpv", s.target.config, s.target.params);
}

void stage_bilevel(const ExperimentConfig& cfg, const fs::path& dir, std::size_t r, std::uint64_t seed) {
  check_round(cfg, r);
  const Snapshots warm = read_warm(dir);
  const models::ScoreModel score_in = read_score_in(cfg, dir, r);
  const fs::path out = round_dir(dir, r);
  fs::create_directories(out);
  fs::remove(out / "bilevel.json");
  if (!runs_bilevel(cfg, r)) {
    models::save_model(out / "proxy.blpv", warm.proxy.config, warm.proxy.params);
    models::save_model(out / "score.blpv", score_in.config, score_in.params);
    write_text(out / "metrics.jsonl", "");
    write_text(out / "losses.csv", losses_csv({}));
    return;
  }
  const Corpora c = read_corpora(dir);
  const models::LanguageModel teacher = read_prev_target(dir, r);
  const BilevelOutcome b = in_stage("bilevel", r, [&] {
    return train_score_model(cfg, warm.proxy, score_in, teacher, round_shard(cfg, c.train.data, r), c.validation, r,
                             seed);
  });
  models::save_model(out / "proxy.blpv", b.proxy.config, b.proxy.params);
  models::save_model(out / "score.blpv", b.score.config, b.score.params);
  write_text(out / "metrics.jsonl", metrics_jsonl(b.metrics));
  write_text(out / "losses.csv", losses_csv(b.metrics));
  write_text(out / "bilevel.json", json{{"kl_start", b.kl_start}, {"kl_end", b.kl_end}}.dump(2) + "\n");
}

void stage_score(const ExperimentConfig& cfg, const fs::path& dir, std::size_t r, std::uint64_t seed) {
  check_round(cfg, r);
  const Corpora c = read_corpora(dir);
  const data::TokenDataset shard = round_shard(cfg, c.train.data, r);
  InfluenceTable t;
  if (runs_bilevel(cfg, r)) {
    require_file(round_dir(dir, r) / "score.blpv");
    const models::ScoreModel s = models::load_score_model(round_dir(dir, r) / "score.blpv");
    t = in_stage("score", r, [&] { return infer_scores(s, shard, cfg.threads()); });
  } else {
    t = random_scores(shard, seed, r);
  }
  fs::create_directories(round_dir(dir, r));
  write_scores(round_dir(dir, r) / "scores.tsv", t);
}

void stage_select(const fs::path& dir, std::size_t r, double fraction) {
  const InfluenceTable t = read_scores(round_dir(dir, r) / "scores.tsv");
  write_selection(round_dir(dir, r) / "selection.txt", select_topk(t, fraction));
}

void stage_retrain(const ExperimentConfig& cfg, const fs::path& dir, std::size_t r, std::uint64_t seed) {
  check_round(cfg, r);
  const Corpora c = read_corpora(dir);
  const SelectionResult sel = read_selection(round_dir(dir, r) / "selection.txt");
  const RetrainOutcome re =
      in_stage("retrain", r, [&] { return retrain_target(cfg, read_prev_target(dir, r), c.train.data, sel, r, seed); });
  models::save_model(round_dir(dir, r) / "target.blpv", re.target.config, re.target.params);
  write_text(round_dir(dir, r) / "retrain.csv", retrain_csv(re.losses));
}

void stage_evaluate(const ExperimentConfig& cfg, const fs::path& dir, std::size_t r) {
  check_round(cfg, r);
  const Corpora c = read_corpora(dir);
  const fs::path rd = round_dir(dir, r);
  require_file(rd / "target.blpv");
  const models::LanguageModel target = models::load_language_model(rd / "target.blpv");
  const SelectionResult sel = read_selection(rd / "selection.txt");
  const Evaluation e = in_stage("evaluate", r, [&] {
    return evaluate(target, c.heldout, &sel, c.train.labels ? &*c.train.labels : nullptr, cfg.threads());
  });
  write_text(rd / "evaluation.json", evaluation_json(e).dump(2) + "\n");
}

void run_arm(const ExperimentConfig& cfg, const fs::path& dir, std::uint64_t seed) {
  cfg.validate();
  fs::create_directories(dir);
  stage_gen_data(cfg, dir, seed);
  stage_warmup(cfg, dir, seed);
  for (std::size_t r = 0; r < cfg.round.rounds; ++r) {
    stage_bilevel(cfg, dir, r, seed);
    stage_score(cfg, dir, r, seed);
    stage_select(dir, r, cfg.round.select_fraction);
    stage_retrain(cfg, dir, r, seed);
    stage_evaluate(cfg, dir, r);
  }
}

void write_scores(const fs::path& path, const InfluenceTable& table) {
  if (table.indices.size() != table.scores.size()) throw ShapeError("influence table: index/score count mismatch");
  std::string out = "index\tscore\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += std::to_string(table.indices[i]) + '\t' + format_score(table.scores[i]) + '\n';
  }
  write_text(path, out);
}

InfluenceTable read_scores(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "index\tscore") throw DataError(path.string() + ": bad header");
  InfluenceTable t;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    std::size_t index = 0;
    double score = 0.0;
    if (std::sscanf(line.c_str(), "%zu\t%lf", &index, &score) != 2) {
      throw DataError(path.string() + ": malformed line " + std::to_string(lineno));
    }
    t.indices.push_back(index);
    t.scores.push_back(score);
  }
  return t;
}

void write_selection(const fs::path& path, const SelectionResult& s) {
  std::string out;
  for (std::size_t i : s.indices) out += std::to_string(i) + '\n';
  write_text(path, out);
}

SelectionResult read_selection(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  SelectionResult s;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    std::size_t index = 0;
    if (std::sscanf(line.c_str(), "%zu", &index) != 1) {
      throw DataError(path.string() + ": malformed line " + std::to_string(lineno));
    }
    s.indices.push_back(index);
  }
  return s;
}

Evaluation read_evaluation(const fs::path& path) {
  const json j = read_json(path);
  Evaluation e;
  e.cross_entropy = j.at("cross_entropy").get<double>();
  e.perplexity = j.at("perplexity").get<double>();
  if (!j.at("clean_fraction").is_null()) e.clean_fraction = j.at("clean_fraction").get<double>();
  return e;
}

const ArmRecord& ExperimentReport::find(std::uint64_t seed, Arm arm) const {
  for (const auto& a : runs) {
    if (a.seed == seed && a.arm == arm) return a;
  }
  throw UsageError("report has no run for seed " + std::to_string(seed) + " arm " + to_string(arm));
}

namespace {

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"stderr", s.std_error}}; }

}  // namespace

Summary ExperimentReport::final_cross_entropy(Arm arm) const {
  std::vector<double> xs;
  for (std::uint64_t s : seeds) xs.push_back(find(s, arm).rounds.back().cross_entropy);
  return summarize(xs);
}

Summary ExperimentReport::clean_fraction(Arm arm, std::size_t r) const {
  std::vector<double> xs;
  for (std::uint64_t s : seeds) {
    const auto& rec = find(s, arm).rounds.at(r);
    if (rec.clean_fraction) xs.push_back(*rec.clean_fraction);
  }
  return summarize(xs);
}

ArmRecord read_arm(const ExperimentConfig& cfg, const fs::path& dir, std::uint64_t seed, Arm arm) {
  ArmRecord rec{seed, arm, {}};
  for (std::size_t r = 0; r < cfg.round.rounds; ++r) {
    const fs::path rd = round_dir(dir, r);
    const Evaluation e = read_evaluation(rd / "evaluation.json");
    RoundRecord rr{e.cross_entropy, e.perplexity, e.clean_fraction, std::nullopt, std::nullopt};
    if (fs::exists(rd / "bilevel.json")) {
      const json b = read_json(rd / "bilevel.json");
      rr.kl_start = b.at("kl_start").get<double>();
      rr.kl_end = b.at("kl_end").get<double>();
    }
    rec.rounds.push_back(rr);
  }
  return rec;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                const fs::path& dir) {
  if (seeds.empty()) throw UsageError("run_experiment: at least one seed required");
  ExperimentReport report;
  report.seeds = seeds;
  json runs = json::array();
  for (std::uint64_t seed : seeds) {
    for (Arm arm : {Arm::bliss, Arm::random}) {
      ExperimentConfig c = cfg;
      c.arm = arm;
      const fs::path d = dir / ("seed_" + std::to_string(seed)) / to_string(arm);
      run_arm(c, d, seed);
      report.runs.push_back(read_arm(c, d, seed, arm));
      json rounds = json::array();
      for (const auto& r : report.runs.back().rounds) {
        json jr = {{"cross_entropy", r.cross_entropy}, {"perplexity", r.perplexity}};
        jr["clean_fraction"] = r.clean_fraction ? json(*r.clean_fraction) : json(nullptr);
        if (r.kl_start) jr["kl_start"] = *r.kl_start;
        if (r.kl_end) jr["kl_end"] = *r.kl_end;
        rounds.push_back(jr);
      }
      runs.push_back({{"seed", seed}, {"arm", to_string(arm)}, {"rounds", rounds}});
    }
  }
  json summary;
  for (Arm arm : {Arm::bliss, Arm::random}) {
    json per_round = json::array();
    for (std::size_t r = 0; r < cfg.round.rounds; ++r) per_round.push_back(summary_json(report.clean_fraction(arm, r)));
    summary[to_string(arm)] = {{"final_cross_entropy", summary_json(report.final_cross_entropy(arm))},
                               {"clean_fraction", per_round}};
  }
  fs::create_directories(dir);
  write_text(dir / "report.json", json{{"seeds", seeds}, {"runs", runs}, {"summary", summary}}.dump(2) + "\n");
  return report;
}

}  // namespace bliss::pipeline
