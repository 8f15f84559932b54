#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mmt/core/errors.hpp"

// Little-endian primitives shared by the binary container formats.

namespace mmt::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xff),
                                 static_cast<unsigned char>((v >> 8) & 0xff),
                                 static_cast<unsigned char>((v >> 16) & 0xff),
                                 static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw TruncatedFileError("truncated file while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline float read_f32(std::istream& in, const std::string& what) {
  std::uint32_t bits = read_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_magic(std::ostream& out, const char magic[4], unsigned char version) {
  out.write(magic, 4);
  out.put(static_cast<char>(version));
}

inline void read_magic(std::istream& in, const char magic[4], unsigned char version,
                       const std::string& format_name) {
  char got[4] = {0, 0, 0, 0};
  in.read(got, 4);
  if (in.gcount() != 4) throw TruncatedFileError("truncated " + format_name + " header");
  if (std::memcmp(got, magic, 4) != 0)
    throw BadMagicError("bad magic bytes: not a " + format_name + " file");
  int v = in.get();
  if (v == std::istream::traits_type::eof())
    throw TruncatedFileError("truncated " + format_name + " header");
  if (v != version)
    throw Error("unsupported " + format_name + " version " + std::to_string(v));
}

}  // namespace mmt::binio
