// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "bliss/errors.hpp"

// Little-endian scalar I/O for the on-disk formats, independent of host order.
namespace bliss::io {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("unexpected end of file");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_le(out, bits);
}

inline float read_f32(std::istream& in) {
  const auto bits = read_le<std::uint32_t>(in);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw DataError(what + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
  }
}

}  // namespace bliss::io
