// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bliss/pipeline/pipeline.hpp"

namespace bliss::cli {

struct Settings {
  pipeline::ExperimentConfig experiment;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

/// Defaults for every key. Bilevel knobs use full-scale values;
/// sizes are desk scale.
Settings default_settings();

/// Keys in the order they are written.
const std::vector<std::string>& config_keys();

/// Sets one key from its text form. Throws UsageError naming the key.
void set_key(Settings& s, const std::string& key, const std::string& value);
std::string get_key(const Settings& s, const std::string& key);

/// `key = value` lines; `#` starts a comment. Later lines win.
void apply_config_text(Settings& s, const std::string& text, const std::string& origin = "config");
void apply_config_file(Settings& s, const std::filesystem::path& path);
/// "key=value" as given to --set.
void apply_override(Settings& s, const std::string& assignment);

/// Effective configuration in config-file syntax. shard_parallelism is an
/// execution knob and is left out, so outputs do not depend on it.
std::string render_config(const Settings& s);

}  // namespace bliss::cli
