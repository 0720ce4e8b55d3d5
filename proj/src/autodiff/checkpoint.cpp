// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "bliss/errors.hpp"
#include "bliss/io/binary.hpp"

namespace bliss::ad {

void write_checkpoint(std::ostream& out, const ParamVector& params) {
  out.write("BLPV", 4);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_blocks()));
  for (std::size_t b = 0; b < params.num_blocks(); ++b) {
    const std::string& name = params.name(b);
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw UsageError("block name too long for checkpoint: " + name);
    }
    io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Tensor& t = params.tensor(b);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) io::write_le<std::uint64_t>(out, d);
    for (double v : t.values()) io::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw Error("checkpoint write failed");
}

ParamVector read_checkpoint(std::istream& in) {
  io::expect_magic(in, "BLPV", "checkpoint");
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto blocks = io::read_le<std::uint32_t>(in);
  ParamVector out;
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const auto len = io::read_le<std::uint16_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("checkpoint: truncated block name");
    const auto rank = io::read_le<std::uint8_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(io::read_le<std::uint64_t>(in));
    Tensor t(shape);
    for (double& v : t.values()) v = static_cast<double>(io::read_f32(in));
    out.add(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace bliss::ad
