#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hemgs {

// Error hierarchy. Parse errors name the offending record, decode errors
// distinguish truncation / checksum / digest failures so callers can react.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};
struct DecodeError : Error {
  explicit DecodeError(const std::string& msg) : Error(msg) {}
};
struct ChecksumError : DecodeError {
  explicit ChecksumError(const std::string& msg) : DecodeError(msg) {}
};
struct DigestError : DecodeError {
  explicit DigestError(const std::string& msg) : DecodeError(msg) {}
};
struct InvariantError : Error {
  explicit InvariantError(const std::string& msg) : Error(msg) {}
};

using Bytes = std::vector<std::uint8_t>;

// splitmix64, used as a counter-based hash RNG where noise draws must be a
// pure function of indices (training noise, synth jitter).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform double in [0,1) from a 64-bit hash state.
inline double u01(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);
inline std::uint32_t crc32(const Bytes& b) { return crc32(b.data(), b.size()); }

// FNV-1a 64, used for model-parameter digests.
inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hemgs
