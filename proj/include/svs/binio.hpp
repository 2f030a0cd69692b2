#pragma once

#include "svs/common.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace svs {

// Little-endian binary stream helpers for the cache/checkpoint formats.
// x86/ARM little-endian hosts write raw; the explicit byte order keeps the
// files portable either way.

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  write_u32(os, static_cast<uint32_t>(v));
  write_u32(os, static_cast<uint32_t>(v >> 32));
}

inline uint64_t read_u64(std::istream& is) {
  const uint64_t lo = read_u32(is);
  const uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline float read_f32(std::istream& is) {
  const uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void write_f32_array(std::ostream& os, const float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) write_f32(os, data[i]);
}

inline void read_f32_array(std::istream& is, float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) data[i] = read_f32(is);
}

inline void write_magic(std::ostream& os, const char magic[5]) { os.write(magic, 4); }

inline void check_magic(std::istream& is, const char magic[5], const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  require(is.good() && std::memcmp(buf, magic, 4) == 0, Err::UnreadableFile,
          what + ": bad magic (expected " + magic + ")");
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace svs
