#ifndef LOSSTUNNEL_HASHING_HPP
#define LOSSTUNNEL_HASHING_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "losstunnel/types.hpp"

namespace losstunnel {

// FNV-1a 64-bit; used for content/config integrity checks, not security.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string toHex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string hashString(const std::string& s) { return toHex(fnv1a64(s.data(), s.size())); }

inline std::string hashFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return toHex(h);
}

}  // namespace losstunnel

#endif
