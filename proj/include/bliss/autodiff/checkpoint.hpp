// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>

#include "bliss/autodiff/param_vector.hpp"

namespace bliss::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "BLPV" | u32 version | u32 block count | per block: u16 name length, name
// bytes, u8 rank, u64 dims..., f32 payload. All little-endian. Values are
// narrowed to float on write.
void write_checkpoint(std::ostream& out, const ParamVector& params);
ParamVector read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector load_checkpoint(const std::filesystem::path& path);

}  // namespace bliss::ad
