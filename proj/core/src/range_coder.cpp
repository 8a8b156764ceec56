#include "hemgs/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hemgs {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void DiscretizedCdf::validate() const {
  if (cum.size() < 2) throw InvariantError("cdf needs at least one symbol");
  if (cum.front() != 0) throw InvariantError("cdf must start at 0");
  if (cum.back() != kTotal) throw InvariantError("cdf must end at 2^16");
  for (std::size_t i = 1; i < cum.size(); ++i)
    if (cum[i] <= cum[i - 1]) throw InvariantError("cdf not strictly increasing");
}

DiscretizedCdf build_cdf(std::span<const double> pmf, std::int64_t alphabet_offset) {
  const std::size_t n = pmf.size();
  if (n == 0) throw InvariantError("build_cdf: empty pmf");
  if (n > DiscretizedCdf::kTotal / 2)
    throw InvariantError("build_cdf: alphabet too large for 16-bit precision");
  double sum = 0;
  for (double p : pmf) {
    if (!(p >= 0)) throw InvariantError("build_cdf: negative or NaN pmf entry");
    sum += p;
  }
  if (sum <= 0) throw InvariantError("build_cdf: all-zero pmf");

  const std::uint32_t total = DiscretizedCdf::kTotal;
  std::vector<std::uint32_t> freq(n);
  std::vector<double> remainder(n);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = pmf[i] / sum * double(total);
    freq[i] = std::max<std::uint32_t>(1, std::uint32_t(ideal));
    remainder[i] = ideal - double(std::uint32_t(ideal));
    assigned += freq[i];
  }
  if (assigned < total) {
    // Largest-remainder distribution of the leftover mass.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    std::uint64_t left = total - assigned;
    for (std::size_t i = 0; left > 0; i = (i + 1) % n, --left) ++freq[order[i]];
  } else if (assigned > total) {
    // Flooring to 1 overshot; take back from the largest frequencies.
    std::uint64_t excess = assigned - total;
    while (excess > 0) {
      std::size_t big = std::max_element(freq.begin(), freq.end()) - freq.begin();
      std::uint32_t take = std::uint32_t(std::min<std::uint64_t>(excess, freq[big] - 1));
      if (take == 0) throw InvariantError("build_cdf: cannot normalize pmf");
      freq[big] -= take;
      excess -= take;
    }
  }

  DiscretizedCdf cdf;
  cdf.alphabet_offset = alphabet_offset;
  cdf.cum.resize(n + 1);
  cdf.cum[0] = 0;
  for (std::size_t i = 0; i < n; ++i) cdf.cum[i + 1] = cdf.cum[i] + freq[i];
  cdf.validate();
  return cdf;
}

// --- encoder ----------------------------------------------------------------

RangeEncoder::RangeEncoder() = default;

void RangeEncoder::shift_low() {
  if (std::uint32_t(low_) < 0xff000000u || (low_ >> 32) != 0) {
    std::uint8_t carry = std::uint8_t(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(std::uint8_t(temp + carry));
      temp = 0xff;
    } while (--cache_size_ != 0);
    cache_ = std::uint8_t(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ << 8) & 0xffffffffULL;
}

void RangeEncoder::encode_freq(std::uint32_t cum_low, std::uint32_t freq) {
  std::uint32_t r = range_ >> DiscretizedCdf::kTotalBits;
  low_ += std::uint64_t(r) * cum_low;
  range_ = r * freq;
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::encode(std::int64_t symbol, const DiscretizedCdf& cdf) {
  if (finished_) throw InvariantError("encode after finish");
  if (!cdf.contains(symbol))
    throw InvariantError("symbol " + std::to_string(symbol) + " outside cdf alphabet [" +
                         std::to_string(cdf.alphabet_offset) + ", " +
                         std::to_string(cdf.alphabet_offset +
                                        std::int64_t(cdf.alphabet_size())) +
                         ")");
  auto idx = std::size_t(symbol - cdf.alphabet_offset);
  std::uint32_t f = cdf.cum[idx + 1] - cdf.cum[idx];
  encode_freq(cdf.cum[idx], f);
  coded_bits_ += std::log2(double(DiscretizedCdf::kTotal) / double(f));
}

void RangeEncoder::encode_raw_byte(std::uint8_t byte) {
  if (finished_) throw InvariantError("encode after finish");
  encode_freq(std::uint32_t(byte) << 8, 1u << 8);
  coded_bits_ += 8;
}

Bytes RangeEncoder::finish() {
  if (finished_) throw InvariantError("finish called twice");
  finished_ = true;
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

// --- decoder ----------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) throw DecodeError("truncated range-coded stream");
  return in_[pos_++];
}

std::uint32_t RangeDecoder::decode_freq(std::uint32_t total) {
  std::uint32_t r = range_ >> DiscretizedCdf::kTotalBits;
  std::uint32_t dv = code_ / r;
  return dv < total ? dv : total - 1;
}

void RangeDecoder::consume(std::uint32_t cum_low, std::uint32_t freq) {
  std::uint32_t r = range_ >> DiscretizedCdf::kTotalBits;
  code_ -= r * cum_low;
  range_ = r * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

std::int64_t RangeDecoder::decode(const DiscretizedCdf& cdf) {
  std::uint32_t dv = decode_freq(DiscretizedCdf::kTotal);
  // Largest index with cum[idx] <= dv.
  auto it = std::upper_bound(cdf.cum.begin(), cdf.cum.end(), dv);
  std::size_t idx = std::size_t(it - cdf.cum.begin()) - 1;
  consume(cdf.cum[idx], cdf.cum[idx + 1] - cdf.cum[idx]);
  return cdf.alphabet_offset + std::int64_t(idx);
}

std::uint8_t RangeDecoder::decode_raw_byte() {
  std::uint32_t dv = decode_freq(DiscretizedCdf::kTotal);
  std::uint8_t byte = std::uint8_t(dv >> 8);
  consume(std::uint32_t(byte) << 8, 1u << 8);
  return byte;
}

// --- sequence wrappers ------------------------------------------------------

Bytes encode_symbols(std::span<const std::int64_t> symbols,
                     std::span<const DiscretizedCdf> cdfs) {
  if (symbols.size() != cdfs.size())
    throw InvariantError("encode_symbols: one cdf per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], cdfs[i]);
  return enc.finish();
}

std::vector<std::int64_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                         std::span<const DiscretizedCdf> cdfs,
                                         std::size_t count) {
  if (cdfs.size() != count)
    throw InvariantError("decode_symbols: one cdf per symbol required");
  std::vector<std::int64_t> out;
  out.reserve(count);
  if (count == 0) return out;
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < count; ++i) out.push_back(dec.decode(cdfs[i]));
  return out;
}

}  // namespace hemgs
