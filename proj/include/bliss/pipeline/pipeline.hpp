// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bliss/bilevel/bilevel.hpp"
#include "bliss/data/dataset.hpp"
#include "bliss/data/synthetic.hpp"
#include "bliss/models/models.hpp"
#include "bliss/models/train.hpp"
#include "bliss/weighting/weights.hpp"

namespace bliss::pipeline {

enum class ProxyReset : std::uint8_t { per_round, periodic };
enum class ScoreInit : std::uint8_t { carry_over, reset_to_round1 };
enum class Arm : std::uint8_t { bliss, random };

std::string to_string(Arm arm);
Arm parse_arm(const std::string& s);

struct RoundConfig {
  std::size_t rounds = 5;
  double select_fraction = 0.2;
  std::size_t retrain_steps = 10000;  // Q
  double eta4 = 1e-3;
  std::size_t retrain_batch = 16;
  std::size_t warmup_steps = 0;
  double warmup_lr = 1e-3;
  std::size_t warmup_batch = 16;
  models::Optimizer warmup_optimizer = models::Optimizer::adam;
  double bilevel_fraction = 0.001;
  ProxyReset proxy_reset = ProxyReset::per_round;
  std::size_t reset_every = 50;
  std::size_t distill_steps = 240;
  std::size_t periodic_inner_steps = 4;
  bool periodic_drop_kl = true;
  ScoreInit score_init = ScoreInit::carry_over;
  void validate() const;
};

struct ExperimentConfig {
  models::ModelConfig proxy = models::default_proxy_config();
  models::ModelConfig target = models::default_target_config();
  bilevel::BilevelConfig bilevel;
  RoundConfig round;
  data::CorpusSpec corpus;
  std::size_t validation_rows = 512;
  std::size_t heldout_rows = 512;
  std::size_t probe_rows = 64;
  weighting::Mode mode = weighting::Mode::softmax;
  std::size_t weight_shards = 1;
  std::size_t shard_parallelism = 1;
  Arm arm = Arm::bliss;
  void validate() const;
  std::size_t threads() const;
};

/// Per-sample scores for one shard, keyed by root dataset index.
struct InfluenceTable {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  std::size_t size() const noexcept { return indices.size(); }
};

struct SelectionResult {
  std::vector<std::size_t> indices;  // ascending
  double cutoff = 0.0;
};

struct Evaluation {
  double cross_entropy = 0.0;
  double perplexity = 0.0;
  std::optional<double> clean_fraction;
};

struct Corpora {
  data::LabeledDataset train;
  data::TokenDataset validation;
  data::TokenDataset heldout;
};

struct Snapshots {
  models::LanguageModel proxy;
  models::ScoreModel score;
  models::LanguageModel target;
};

struct BilevelOutcome {
  models::LanguageModel proxy;
  models::ScoreModel score;
  double kl_start = 0.0;
  double kl_end = 0.0;
  std::vector<bilevel::StepMetrics> metrics;
};

struct RetrainOutcome {
  models::LanguageModel target;
  std::vector<double> losses;
};

/// Rounds a stage output to what its checkpoint file holds.
models::LanguageModel as_stored(models::LanguageModel m);
models::ScoreModel as_stored(models::ScoreModel m);
/// Rounds a score to the precision written to scores.tsv.
double as_stored(double score);

/// Training corpus plus clean validation and held-out sets from one chain.
Corpora make_corpora(const ExperimentConfig& cfg, std::uint64_t seed);

Snapshots warmup_all(const ExperimentConfig& cfg, const data::TokenDataset& train, std::uint64_t seed);

data::TokenDataset round_shard(const ExperimentConfig& cfg, const data::TokenDataset& train, std::size_t r);

/// Whether round r trains the score model. Round 0 selects at random.
bool runs_bilevel(const ExperimentConfig& cfg, std::size_t r);

BilevelOutcome train_score_model(const ExperimentConfig& cfg, const models::LanguageModel& proxy0,
                                 const models::ScoreModel& score_in, const models::LanguageModel& teacher,
                                 const data::TokenDataset& shard, const data::TokenDataset& validation,
                                 std::size_t r, std::uint64_t seed);

InfluenceTable infer_scores(const models::ScoreModel& score, const data::TokenDataset& shard,
                            std::size_t threads = 1);
InfluenceTable random_scores(const data::TokenDataset& shard, std::uint64_t seed, std::size_t r);

SelectionResult select_topk(const InfluenceTable& table, double fraction);

RetrainOutcome retrain_target(const ExperimentConfig& cfg, models::LanguageModel target,
                              const data::TokenDataset& train, const SelectionResult& selection, std::size_t r,
                              std::uint64_t seed);

Evaluation evaluate(const models::LanguageModel& target, const data::TokenDataset& heldout,
                    const SelectionResult* selection = nullptr,
                    const std::vector<data::Provenance>* labels = nullptr, std::size_t threads = 1);

struct RoundState {
  std::size_t round = 0;
  models::LanguageModel proxy;
  models::ScoreModel score;
  models::LanguageModel target;
  InfluenceTable table;
  SelectionResult selection;
  std::optional<BilevelOutcome> bilevel;
  std::vector<double> retrain_losses;
  Evaluation evaluation;
};

/// One round in memory. `prev` is null for round 0. Labels only reach evaluate.
RoundState run_round(const ExperimentConfig& cfg, std::size_t r, const Snapshots& warm, const RoundState* prev,
                     const Corpora& corpora, std::uint64_t seed);

// On-disk layout. Each stage reads its inputs from dir and writes its
// outputs there, so a sequence of stages equals one `run`.
std::filesystem::path round_dir(const std::filesystem::path& dir, std::size_t r);

void write_corpora(const std::filesystem::path& dir, const Corpora& c);
Corpora read_corpora(const std::filesystem::path& dir);

void stage_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::uint64_t seed);
void stage_warmup(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::uint64_t seed);
void stage_bilevel(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::size_t r, std::uint64_t seed);
void stage_score(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::size_t r, std::uint64_t seed);
void stage_select(const std::filesystem::path& dir, std::size_t r, double fraction);
void stage_retrain(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::size_t r, std::uint64_t seed);
void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::size_t r);

/// gen-data, warmup and every round for cfg.arm.
void run_arm(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::uint64_t seed);

void write_scores(const std::filesystem::path& path, const InfluenceTable& table);
InfluenceTable read_scores(const std::filesystem::path& path);
void write_selection(const std::filesystem::path& path, const SelectionResult& s);
SelectionResult read_selection(const std::filesystem::path& path);
Evaluation read_evaluation(const std::filesystem::path& path);

struct RoundRecord {
  double cross_entropy = 0.0;
  double perplexity = 0.0;
  std::optional<double> clean_fraction;
  std::optional<double> kl_start;
  std::optional<double> kl_end;
};

struct ArmRecord {
  std::uint64_t seed = 0;
  Arm arm = Arm::bliss;
  std::vector<RoundRecord> rounds;
};

struct Summary {
  double mean = 0.0;
  double std_error = 0.0;
};

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmRecord> runs;
  const ArmRecord& find(std::uint64_t seed, Arm arm) const;
  /// Mean and standard error of final-round cross-entropy over seeds.
  Summary final_cross_entropy(Arm arm) const;
  Summary clean_fraction(Arm arm, std::size_t r) const;
};

ArmRecord read_arm(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::uint64_t seed, Arm arm);

/// Both arms for every seed under dir/seed_<s>/<arm>/, plus dir/report.json.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& dir);

}  // namespace bliss::pipeline
