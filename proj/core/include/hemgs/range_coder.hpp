#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hemgs/common.hpp"

namespace hemgs {

// Discretized cumulative distribution for the range coder.
// cum has alphabet_size+1 entries, cum[0] = 0, cum.back() = kTotal, strictly
// increasing (every in-range symbol has frequency >= 1 after flooring).
struct DiscretizedCdf {
  static constexpr std::uint32_t kTotalBits = 16;
  static constexpr std::uint32_t kTotal = 1u << kTotalBits;

  std::vector<std::uint32_t> cum;
  std::int64_t alphabet_offset = 0;  // symbol value of index 0

  std::size_t alphabet_size() const { return cum.empty() ? 0 : cum.size() - 1; }
  bool contains(std::int64_t symbol) const {
    return symbol >= alphabet_offset &&
           symbol < alphabet_offset + std::int64_t(alphabet_size());
  }
  std::uint32_t freq(std::int64_t symbol) const {
    auto i = std::size_t(symbol - alphabet_offset);
    return cum[i + 1] - cum[i];
  }
  void validate() const;
};

// Quantizes a pmf to a kTotal-normalized cdf with largest-remainder rounding;
// every symbol keeps frequency >= 1. Throws on an all-zero pmf.
DiscretizedCdf build_cdf(std::span<const double> pmf, std::int64_t alphabet_offset = 0);

// Renormalizing integer range coder, 64-bit low / 32-bit range, byte-wise
// renormalization at 2^24. Integer-only state: output is identical across
// runs and platforms.
class RangeEncoder {
 public:
  RangeEncoder();
  // Throws InvariantError if the symbol lies outside the cdf alphabet.
  void encode(std::int64_t symbol, const DiscretizedCdf& cdf);
  void encode_raw_byte(std::uint8_t byte);
  Bytes finish();
  // -log2(freq/kTotal) summed over encoded symbols (raw bytes count 8 bits).
  double coded_bits() const { return coded_bits_; }

 private:
  void encode_freq(std::uint32_t cum_low, std::uint32_t freq);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xffffffffu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool finished_ = false;
  double coded_bits_ = 0;
  Bytes out_;
};

class RangeDecoder {
 public:
  // The span must outlive the decoder. Throws DecodeError on a stream too
  // short to initialize.
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);
  std::int64_t decode(const DiscretizedCdf& cdf);
  std::uint8_t decode_raw_byte();

 private:
  std::uint32_t decode_freq(std::uint32_t total);
  void consume(std::uint32_t cum_low, std::uint32_t freq);
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xffffffffu;
  std::uint32_t code_ = 0;
};

// Convenience wrappers over per-symbol cdfs (the autoregressive contract:
// cdf i may depend only on symbols < i, which these wrappers trivially meet
// since the caller precomputed all cdfs).
Bytes encode_symbols(std::span<const std::int64_t> symbols,
                     std::span<const DiscretizedCdf> cdfs);
std::vector<std::int64_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                         std::span<const DiscretizedCdf> cdfs,
                                         std::size_t count);

}  // namespace hemgs
