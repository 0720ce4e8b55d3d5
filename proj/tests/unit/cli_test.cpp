// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include "bliss/cli/config.hpp"
#include "bliss/errors.hpp"
#include "support/pipeline_fixtures.hpp"

namespace {

using namespace bliss;
using namespace bliss::cli;
namespace bt = bliss::testing;
namespace fs = std::filesystem;

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultBilevelSettings) {
  const Settings s = default_settings();
  const auto& b = s.experiment.bilevel;
  EXPECT_EQ(b.lower.gamma, 1e-2);
  EXPECT_EQ(b.lower.lambda, 1e-6);
  EXPECT_EQ(b.lower.eta1, 1e-5);
  EXPECT_EQ(b.upper.eta3, 1e-5);
  EXPECT_EQ(b.gdls.eta, 1e-2);
  EXPECT_EQ(b.gdls.k_steps, 3u);
  EXPECT_EQ(b.upper.t_steps, 3000u);
  EXPECT_EQ(b.batch_size, 16u);
  EXPECT_EQ(s.experiment.round.select_fraction, 0.2);
  EXPECT_EQ(s.experiment.round.bilevel_fraction, 0.001);
  EXPECT_EQ(s.experiment.round.rounds, 5u);
  EXPECT_NO_THROW(s.experiment.validate());
}

TEST(Config, ParsesKeysCommentsAndWhitespace) {
  Settings s = default_settings();
  apply_config_text(s, "# header\n\n  gamma = 0.5   # trailing\nproxy_reset=periodic\nvocab = 32\n"
                       "gdls_guard = false\narm = random\n");
  EXPECT_EQ(s.experiment.bilevel.lower.gamma, 0.5);
  EXPECT_EQ(s.experiment.round.proxy_reset, pipeline::ProxyReset::periodic);
  EXPECT_FALSE(s.experiment.bilevel.gdls.guard);
  EXPECT_EQ(s.experiment.arm, pipeline::Arm::random);
  EXPECT_EQ(s.experiment.proxy.vocab_size, 32u);
  EXPECT_EQ(s.experiment.target.vocab_size, 32u);
}

TEST(Config, RejectsUnknownKeysAndBadValuesNamingTheKey) {
  Settings s = default_settings();
  EXPECT_NE(error_of([&] { apply_config_text(s, "gamma = 1\ngamm = 2\n", "c.cfg"); }).find("c.cfg:2"), std::string::npos);
  EXPECT_NE(error_of([&] { apply_config_text(s, "gamm = 2\n"); }).find("'gamm'"), std::string::npos);
  EXPECT_NE(error_of([&] { set_key(s, "eta4", "fast"); }).find("'eta4'"), std::string::npos);
  EXPECT_NE(error_of([&] { set_key(s, "rounds", "-1"); }).find("'rounds'"), std::string::npos);
  EXPECT_NE(error_of([&] { set_key(s, "weighting", "hard"); }).find("softmax or naive"), std::string::npos);
  EXPECT_NE(error_of([&] { set_key(s, "eta1", "nan"); }).find("'eta1'"), std::string::npos);
  EXPECT_NE(error_of([&] { apply_config_text(s, "just words\n"); }).find("key = value"), std::string::npos);
  EXPECT_NE(error_of([&] { apply_override(s, "gamma"); }).find("key=value"), std::string::npos);
}

TEST(Config, LaterValuesAndOverridesWin) {
  Settings s = default_settings();
  apply_config_text(s, "eta4 = 0.1\neta4 = 0.2\n");
  apply_override(s, "eta4 = 0.3");
  EXPECT_EQ(s.experiment.round.eta4, 0.3);
}

TEST(Config, RenderedConfigRoundTrips) {
  Settings s = default_settings();
  apply_config_text(s, "gamma = 0.123456789\nseed = 99\nscore_init = reset_to_round1\nwarmup_optimizer = sgd\n"
                       "noise_fraction = 0.3\nout_dir = somewhere\n");
  const std::string text = render_config(s);
  Settings back = default_settings();
  apply_config_text(back, text);
  EXPECT_EQ(render_config(back), text);
  for (const auto& k : config_keys()) {
    if (k != "shard_parallelism") {
      EXPECT_EQ(get_key(back, k), get_key(s, k)) << k;
    }
  }
}

TEST(Config, ParallelismIsNotRecorded) {
  Settings a = default_settings();
  Settings b = default_settings();
  set_key(b, "shard_parallelism", "4");
  EXPECT_EQ(b.experiment.shard_parallelism, 4u);
  EXPECT_EQ(render_config(a), render_config(b));
}

TEST(Config, EveryKeyIsRendered) {
  const std::string text = render_config(default_settings());
  for (const auto& k : config_keys()) {
    if (k == "shard_parallelism") continue;
    EXPECT_NE(text.find("\n" + k + " = "), std::string::npos) << k;
  }
}

#ifdef BLISS_CLI_PATH

std::string tiny_config_text() {
  const auto c = bt::tiny_pipeline_config();
  Settings s = default_settings();
  s.experiment = c;
  return render_config(s);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BLISS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = bt::scratch_dir("cli");
    std::ofstream(dir / "tiny.cfg") << tiny_config_text();
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string base(const std::string& out) const {
    return "--config " + (dir / "tiny.cfg").string() + " --seed 5 --out-dir " + (dir / out).string();
  }
  fs::path dir;
};

TEST_F(CliTest, StagedCommandsReproduceRun) {
  ASSERT_EQ(run_cli("run " + base("whole")), 0);
  ASSERT_EQ(run_cli("gen-data " + base("staged")), 0);
  ASSERT_EQ(run_cli("warmup " + base("staged")), 0);
  for (int r = 0; r < 3; ++r) {
    for (const char* c : {"bilevel", "score", "select", "retrain", "evaluate"}) {
      ASSERT_EQ(run_cli(std::string(c) + " --round " + std::to_string(r) + " " + base("staged")), 0) << c << r;
    }
  }
  auto whole = bt::snapshot_tree(dir / "whole");
  auto staged = bt::snapshot_tree(dir / "staged");
  // The recorded out_dir is the only intended difference.
  EXPECT_NE(whole.at("config.txt"), staged.at("config.txt"));
  whole.erase("config.txt");
  staged.erase("config.txt");
  EXPECT_EQ(whole, staged);
  EXPECT_TRUE(whole.count("round_2/scores.tsv"));
}

TEST_F(CliTest, RerunFromEffectiveConfigChangesNothing) {
  ASSERT_EQ(run_cli("run " + base("out")), 0);
  const auto first = bt::snapshot_tree(dir / "out");
  ASSERT_EQ(run_cli("run --config " + (dir / "out" / "config.txt").string()), 0);
  EXPECT_EQ(bt::snapshot_tree(dir / "out"), first);
}

TEST_F(CliTest, SelectHonoursFractionFlag) {
  ASSERT_EQ(run_cli("run " + base("out")), 0);
  ASSERT_EQ(run_cli("select --round 1 --fraction 0.5 " + base("out")), 0);
  std::ifstream in(dir / "out" / "round_1" / "selection.txt");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 40u);  // half of an 80-row shard
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("run " + base("x") + " --set nokey=1"), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "absent.cfg").string()), 1);
  EXPECT_EQ(run_cli("select --round 0 " + base("empty")), 1);
  EXPECT_EQ(run_cli("bilevel " + base("x")), 1);  // --round is required
  EXPECT_EQ(run_cli("run " + base("x") + " --set eta4=1e300"), 2);
}

#endif

}  // namespace
