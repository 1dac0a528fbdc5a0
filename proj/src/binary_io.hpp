/*
 * Copyright 2026 The idi-fair Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian scalar I/O shared by the binary file formats.

#ifndef IDIFAIR_SRC_BINARY_IO_HPP_
#define IDIFAIR_SRC_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "idifair/error.hpp"

namespace idifair::binary_io {

template <typename UInt>
inline void write_le(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> buf;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(buf.data(), buf.size());
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
inline void write_f32(std::ostream& out, float v) {
  write_le(out, std::bit_cast<std::uint32_t>(v));
}
inline void write_f64(std::ostream& out, double v) {
  write_le(out, std::bit_cast<std::uint64_t>(v));
}

template <typename UInt>
inline UInt read_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(UInt)> buf;
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw Error(ErrorCode::kTruncated, what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    v |= static_cast<UInt>(buf[i]) << (8 * i);
  }
  return v;
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  return read_le<std::uint32_t>(in, what);
}
inline float read_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(in, what));
}
inline double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5],
                         const std::string& what) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, what);
  }
}

}  // namespace idifair::binary_io

#endif  // IDIFAIR_SRC_BINARY_IO_HPP_
