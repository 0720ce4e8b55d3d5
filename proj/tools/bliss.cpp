// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Exit codes: 0 success, 1 usage or config error,
// 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bliss/cli/config.hpp"
#include "bliss/errors.hpp"
#include "bliss/pipeline/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace bliss;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> fraction;
  std::vector<std::string> sets;
  std::size_t round = 0;
  std::string seeds;
};

void common_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "config file of key = value lines");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--set", f.sets, "override one key, key=value")->take_all();
}

cli::Settings resolve(const Flags& f) {
  cli::Settings s = cli::default_settings();
  if (!f.config.empty()) cli::apply_config_file(s, f.config);
  for (const auto& a : f.sets) cli::apply_override(s, a);
  if (f.seed) s.seed = *f.seed;
  if (f.out_dir) s.out_dir = *f.out_dir;
  if (f.fraction) s.experiment.round.select_fraction = *f.fraction;
  s.experiment.validate();
  return s;
}

void write_effective_config(const cli::Settings& s) {
  fs::create_directories(s.out_dir);
  std::ofstream out(fs::path(s.out_dir) / "config.txt", std::ios::trunc);
  out << cli::render_config(s);
  if (!out) throw Error("cannot write effective config to " + s.out_dir);
}

void print_round(std::size_t r, const pipeline::Evaluation& e) {
  std::printf("round %zu: cross_entropy %.6f perplexity %.4f", r, e.cross_entropy, e.perplexity);
  if (e.clean_fraction) std::printf(" clean_fraction %.4f", *e.clean_fraction);
  std::printf("\n");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw UsageError("--seeds: bad seed '" + item + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel influence-based data selection at desk scale"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic training, validation and held-out corpora");
  auto* warm = app.add_subcommand("warmup", "warm up proxy and target; derive the score model");
  auto* bil = app.add_subcommand("bilevel", "train the score model for one round");
  auto* sco = app.add_subcommand("score", "infer influence scores over one round's shard");
  auto* sel = app.add_subcommand("select", "select the top fraction of one round's scores");
  auto* ret = app.add_subcommand("retrain", "train the target on one round's selection");
  auto* eva = app.add_subcommand("evaluate", "held-out loss and selection clean fraction for one round");
  auto* run = app.add_subcommand("run", "every stage of every round for the configured arm");
  auto* exp = app.add_subcommand("experiment", "both arms over several seeds, with a summary report");
  for (auto* c : {gen, warm, bil, sco, sel, ret, eva, run, exp}) common_options(c, f);
  for (auto* c : {bil, sco, sel, ret, eva}) c->add_option("--round", f.round, "round index")->required();
  sel->add_option("--fraction", f.fraction, "fraction to keep (default: select_fraction)");
  exp->add_option("--seeds", f.seeds, "comma-separated seeds (default: --seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const cli::Settings s = resolve(f);
    const pipeline::ExperimentConfig& cfg = s.experiment;
    const fs::path dir = s.out_dir;
    write_effective_config(s);
    if (gen->parsed()) {
      pipeline::stage_gen_data(cfg, dir, s.seed);
    } else if (warm->parsed()) {
      pipeline::stage_warmup(cfg, dir, s.seed);
    } else if (bil->parsed()) {
      pipeline::stage_bilevel(cfg, dir, f.round, s.seed);
    } else if (sco->parsed()) {
      pipeline::stage_score(cfg, dir, f.round, s.seed);
    } else if (sel->parsed()) {
      pipeline::stage_select(dir, f.round, cfg.round.select_fraction);
    } else if (ret->parsed()) {
      pipeline::stage_retrain(cfg, dir, f.round, s.seed);
    } else if (eva->parsed()) {
      pipeline::stage_evaluate(cfg, dir, f.round);
      print_round(f.round, pipeline::read_evaluation(pipeline::round_dir(dir, f.round) / "evaluation.json"));
    } else if (run->parsed()) {
      pipeline::run_arm(cfg, dir, s.seed);
      for (std::size_t r = 0; r < cfg.round.rounds; ++r) {
        print_round(r, pipeline::read_evaluation(pipeline::round_dir(dir, r) / "evaluation.json"));
      }
    } else if (exp->parsed()) {
      const auto rep = pipeline::run_experiment(cfg, parse_seeds(f.seeds, s.seed), dir);
      for (pipeline::Arm arm : {pipeline::Arm::bliss, pipeline::Arm::random}) {
        const auto ce = rep.final_cross_entropy(arm);
        const auto cf = rep.clean_fraction(arm, cfg.round.rounds - 1);
        std::printf("%s: final cross_entropy %.6f +- %.6f, last-round clean_fraction %.4f +- %.4f\n",
                    pipeline::to_string(arm).c_str(), ce.mean, ce.std_error, cf.mean, cf.std_error);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
