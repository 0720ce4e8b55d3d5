// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bliss/errors.hpp"

namespace bliss::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw UsageError("config key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v, "a finite number");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return x;
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  const std::uint64_t x = to_u64(key, v);
  if (x > UINT32_MAX) bad_value(key, v, "an integer below 2^32");
  return static_cast<std::uint32_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

struct Key {
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

#define BLISS_DOUBLE(expr)                                                                  \
  Key {                                                                                     \
    [](const Settings& s) { return fmt(static_cast<double>(s.expr)); },                     \
        [](Settings& s, const std::string& v) { s.expr = to_double(current_key(), v); }     \
  }
#define BLISS_SIZE(expr)                                                                    \
  Key {                                                                                     \
    [](const Settings& s) { return fmt(static_cast<std::uint64_t>(s.expr)); },              \
        [](Settings& s, const std::string& v) { s.expr = to_u64(current_key(), v); }        \
  }
#define BLISS_U32(expr)                                                                     \
  Key {                                                                                     \
    [](const Settings& s) { return fmt(static_cast<std::uint64_t>(s.expr)); },              \
        [](Settings& s, const std::string& v) { s.expr = to_u32(current_key(), v); }        \
  }
#define BLISS_BOOL(expr)                                                                    \
  Key {                                                                                     \
    [](const Settings& s) { return fmt(s.expr); },                                          \
        [](Settings& s, const std::string& v) { s.expr = to_bool(current_key(), v); }       \
  }

// Setters report the key being assigned; set_key keeps it here.
thread_local std::string g_current_key;
const std::string& current_key() { return g_current_key; }

template <typename E>
Key enum_key(std::function<E&(Settings&)> ref, std::vector<std::pair<std::string, E>> names) {
  auto get = [ref, names](const Settings& s) {
    const E v = ref(const_cast<Settings&>(s));
    for (const auto& [n, e] : names) {
      if (e == v) return n;
    }
    return std::string("?");
  };
  auto set = [ref, names](Settings& s, const std::string& v) {
    std::string options;
    for (const auto& [n, e] : names) {
      if (n == v) {
        ref(s) = e;
        return;
      }
      options += (options.empty() ? "" : " or ") + n;
    }
    bad_value(current_key(), v, options);
  };
  return {get, set};
}

const std::vector<std::pair<std::string, Key>>& table() {
  using pipeline::Arm;
  using pipeline::ProxyReset;
  using pipeline::ScoreInit;
  static const std::vector<std::pair<std::string, Key>> keys = {
      {"seed", BLISS_SIZE(seed)},
      {"out_dir", Key{[](const Settings& s) { return s.out_dir; },
                      [](Settings& s, const std::string& v) {
                        if (v.empty()) bad_value(current_key(), v, "a path");
                        s.out_dir = v;
                      }}},
      {"arm", enum_key<Arm>([](Settings& s) -> Arm& { return s.experiment.arm; },
                            {{"bliss", Arm::bliss}, {"random", Arm::random}})},
      // corpus
      {"num_seqs", BLISS_SIZE(experiment.corpus.num_seqs)},
      {"vocab", BLISS_U32(experiment.corpus.vocab)},
      {"seq_len", BLISS_U32(experiment.corpus.seq_len)},
      {"noise_fraction", BLISS_DOUBLE(experiment.corpus.noise_fraction)},
      {"chain_seed", BLISS_SIZE(experiment.corpus.chain_seed)},
      {"validation_rows", BLISS_SIZE(experiment.validation_rows)},
      {"heldout_rows", BLISS_SIZE(experiment.heldout_rows)},
      {"probe_rows", BLISS_SIZE(experiment.probe_rows)},
      // models
      {"proxy_d_model", BLISS_U32(experiment.proxy.d_model)},
      {"proxy_layers", BLISS_U32(experiment.proxy.n_layers)},
      {"proxy_heads", BLISS_U32(experiment.proxy.n_heads)},
      {"target_d_model", BLISS_U32(experiment.target.d_model)},
      {"target_layers", BLISS_U32(experiment.target.n_layers)},
      {"target_heads", BLISS_U32(experiment.target.n_heads)},
      // lower level
      {"gamma", BLISS_DOUBLE(experiment.bilevel.lower.gamma)},
      {"lambda", BLISS_DOUBLE(experiment.bilevel.lower.lambda)},
      {"eta1", BLISS_DOUBLE(experiment.bilevel.lower.eta1)},
      {"inner_steps", BLISS_SIZE(experiment.bilevel.lower.inner_steps)},
      // linear solve
      {"gdls_eta", BLISS_DOUBLE(experiment.bilevel.gdls.eta)},
      {"gdls_steps", BLISS_SIZE(experiment.bilevel.gdls.k_steps)},
      {"gdls_warm_start", BLISS_BOOL(experiment.bilevel.gdls.warm_start)},
      {"gdls_guard", BLISS_BOOL(experiment.bilevel.gdls.guard)},
      // upper level
      {"eta3", BLISS_DOUBLE(experiment.bilevel.upper.eta3)},
      {"bilevel_steps", BLISS_SIZE(experiment.bilevel.upper.t_steps)},
      {"bilevel_batch", BLISS_SIZE(experiment.bilevel.batch_size)},
      {"validation_batch", BLISS_SIZE(experiment.bilevel.val_batch_size)},
      {"weighting", enum_key<weighting::Mode>(
                        [](Settings& s) -> weighting::Mode& { return s.experiment.mode; },
                        {{"softmax", weighting::Mode::softmax}, {"naive", weighting::Mode::naive}})},
      {"weight_shards", BLISS_SIZE(experiment.weight_shards)},
      // rounds
      {"rounds", BLISS_SIZE(experiment.round.rounds)},
      {"select_fraction", BLISS_DOUBLE(experiment.round.select_fraction)},
      {"bilevel_fraction", BLISS_DOUBLE(experiment.round.bilevel_fraction)},
      {"retrain_steps", BLISS_SIZE(experiment.round.retrain_steps)},
      {"eta4", BLISS_DOUBLE(experiment.round.eta4)},
      {"retrain_batch", BLISS_SIZE(experiment.round.retrain_batch)},
      {"warmup_steps", BLISS_SIZE(experiment.round.warmup_steps)},
      {"warmup_lr", BLISS_DOUBLE(experiment.round.warmup_lr)},
      {"warmup_batch", BLISS_SIZE(experiment.round.warmup_batch)},
      {"warmup_optimizer",
       enum_key<models::Optimizer>(
           [](Settings& s) -> models::Optimizer& { return s.experiment.round.warmup_optimizer; },
           {{"sgd", models::Optimizer::sgd}, {"adam", models::Optimizer::adam}})},
      {"proxy_reset", enum_key<ProxyReset>([](Settings& s) -> ProxyReset& { return s.experiment.round.proxy_reset; },
                                           {{"per_round", ProxyReset::per_round}, {"periodic", ProxyReset::periodic}})},
      {"reset_every", BLISS_SIZE(experiment.round.reset_every)},
      {"distill_steps", BLISS_SIZE(experiment.round.distill_steps)},
      {"periodic_inner_steps", BLISS_SIZE(experiment.round.periodic_inner_steps)},
      {"periodic_drop_kl", BLISS_BOOL(experiment.round.periodic_drop_kl)},
      {"score_init",
       enum_key<ScoreInit>([](Settings& s) -> ScoreInit& { return s.experiment.round.score_init; },
                           {{"carry_over", ScoreInit::carry_over}, {"reset_to_round1", ScoreInit::reset_to_round1}})},
      {"shard_parallelism", BLISS_SIZE(experiment.shard_parallelism)},
  };
  return keys;
}

const Key& lookup(const std::string& key) {
  static const std::map<std::string, const Key*> index = [] {
    std::map<std::string, const Key*> m;
    for (const auto& [name, k] : table()) m[name] = &k;
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw UsageError("unknown config key '" + key + "'");
  return *it->second;
}

/// Model shapes share the corpus vocabulary and length.
void sync_shapes(Settings& s) {
  for (auto* m : {&s.experiment.proxy, &s.experiment.target}) {
    m->vocab_size = s.experiment.corpus.vocab;
    m->seq_len = s.experiment.corpus.seq_len;
  }
}

}  // namespace

Settings default_settings() {
  Settings s;
  auto& e = s.experiment;
  e.corpus = {10000, 256, 64, 0.5, 0, 0};
  e.proxy = {256, 64, 32, 2, 2, models::Family::proxy};
  e.target = {256, 64, 64, 2, 2, models::Family::target};
  e.bilevel.lower = {1e-2, 1e-6, 1e-5, 1};
  e.bilevel.gdls = {1e-2, 3, true, true};
  e.bilevel.upper = {1e-5, 3000};
  e.bilevel.batch_size = 16;
  e.bilevel.val_batch_size = 16;
  e.round.rounds = 5;
  e.round.select_fraction = 0.2;
  e.round.bilevel_fraction = 0.001;
  e.round.retrain_steps = 1000;
  e.round.eta4 = 1e-3;
  e.round.retrain_batch = 16;
  e.round.warmup_steps = 200;
  e.round.warmup_lr = 1e-3;
  sync_shapes(s);
  return s;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, k] : table()) v.push_back(name);
    return v;
  }();
  return names;
}

void set_key(Settings& s, const std::string& key, const std::string& value) {
  const Key& k = lookup(key);
  g_current_key = key;
  k.set(s, value);
  sync_shapes(s);
}

std::string get_key(const Settings& s, const std::string& key) { return lookup(key).get(s); }

void apply_config_text(Settings& s, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set_key(s, key, trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(s, ss.str(), path.string());
}

void apply_override(Settings& s, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  set_key(s, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string render_config(const Settings& s) {
  std::string out = "# effective configuration\n";
  for (const auto& [name, k] : table()) {
    if (name == "shard_parallelism") continue;
    out += name + " = " + k.get(s) + "\n";
  }
  return out;
}

}  // namespace bliss::cli
