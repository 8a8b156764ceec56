#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hemgs/range_coder.hpp"

using namespace hemgs;

namespace {

// Deterministic pseudo-random stream for test inputs.
struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() { return s = splitmix64(s); }
  double uniform() { return u01(next()); }
  std::uint64_t below(std::uint64_t n) { return next() % n; }
};

DiscretizedCdf random_cdf(Rng& rng, std::size_t alphabet, std::int64_t offset) {
  std::vector<double> pmf(alphabet);
  double sum = 0;
  for (double& p : pmf) {
    p = rng.uniform() + 1e-6;
    sum += p;
  }
  for (double& p : pmf) p /= sum;
  return build_cdf(pmf, offset);
}

}  // namespace

TEST_CASE("build_cdf: single-symbol pmf") {
  DiscretizedCdf cdf = build_cdf(std::vector<double>{1.0});
  REQUIRE(cdf.cum.size() == 2);
  CHECK(cdf.cum[0] == 0);
  CHECK(cdf.cum[1] == 65536);
}

TEST_CASE("build_cdf: symmetric half/half pmf") {
  DiscretizedCdf cdf = build_cdf(std::vector<double>{0.5, 0.5});
  REQUIRE(cdf.cum.size() == 3);
  CHECK(cdf.cum[0] == 0);
  CHECK(cdf.cum[1] == 32768);
  CHECK(cdf.cum[2] == 65536);
}

TEST_CASE("build_cdf: tiny probabilities still get frequency >= 1") {
  std::vector<double> pmf{1.0 - 1e-12, 1e-12};
  DiscretizedCdf cdf = build_cdf(pmf);
  CHECK(cdf.freq(1) >= 1);
  CHECK(cdf.cum.back() == 65536);
  cdf.validate();
}

TEST_CASE("build_cdf rejects an all-zero pmf") {
  CHECK_THROWS_AS(build_cdf(std::vector<double>{0.0, 0.0}), InvariantError);
}

TEST_CASE("zero-information source: 1000 certain symbols cost <= 8 bytes") {
  DiscretizedCdf cdf = build_cdf(std::vector<double>{1.0});
  std::vector<std::int64_t> symbols(1000, 0);
  std::vector<DiscretizedCdf> cdfs(1000, cdf);
  Bytes bytes = encode_symbols(symbols, cdfs);
  CHECK(bytes.size() <= 8);
  CHECK(decode_symbols(bytes, cdfs, 1000) == symbols);
}

TEST_CASE("uniform 256-symbol source approaches 8 bits/symbol") {
  std::vector<double> pmf(256, 1.0 / 256.0);
  DiscretizedCdf cdf = build_cdf(pmf);
  Rng rng(1234);
  const std::size_t n = 10000;
  std::vector<std::int64_t> symbols(n);
  for (auto& s : symbols) s = std::int64_t(rng.below(256));
  std::vector<DiscretizedCdf> cdfs(n, cdf);
  Bytes bytes = encode_symbols(symbols, cdfs);
  CHECK(bytes.size() >= std::size_t(0.99 * double(n)));
  CHECK(bytes.size() <= std::size_t(1.01 * double(n)));
  CHECK(decode_symbols(bytes, cdfs, n) == symbols);
}

TEST_CASE("round-trip property over randomized cdf sequences") {
  Rng rng(777);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 200 + rng.below(800);
    std::vector<DiscretizedCdf> cdfs(n);
    std::vector<std::int64_t> symbols(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t alphabet = 1 + rng.below(40);
      std::int64_t offset = std::int64_t(rng.below(100)) - 50;
      cdfs[i] = random_cdf(rng, alphabet, offset);
      symbols[i] = offset + std::int64_t(rng.below(alphabet));
    }
    Bytes bytes = encode_symbols(symbols, cdfs);
    CHECK(decode_symbols(bytes, cdfs, n) == symbols);
  }
}

TEST_CASE("large round trip: 1e5 symbols") {
  Rng rng(31);
  const std::size_t n = 100000;
  DiscretizedCdf cdf = random_cdf(rng, 64, -32);
  std::vector<DiscretizedCdf> cdfs(n, cdf);
  std::vector<std::int64_t> symbols(n);
  for (auto& s : symbols) s = -32 + std::int64_t(rng.below(64));
  Bytes bytes = encode_symbols(symbols, cdfs);
  CHECK(decode_symbols(bytes, cdfs, n) == symbols);
}

TEST_CASE("rate bound: encoded bits <= sum -log2(freq/TOTAL) + 64") {
  Rng rng(4242);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 500;
    DiscretizedCdf cdf = random_cdf(rng, 16, 0);
    RangeEncoder enc;
    double est = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t s = std::int64_t(rng.below(16));
      est -= std::log2(double(cdf.freq(s)) / double(DiscretizedCdf::kTotal));
      enc.encode(s, cdf);
    }
    Bytes bytes = enc.finish();
    CHECK(double(bytes.size()) * 8.0 <= est + 64.0);
    CHECK(doctest::Approx(enc.coded_bits()).epsilon(1e-12) == est);
  }
}

TEST_CASE("determinism: identical inputs give identical bytes") {
  Rng rng(5);
  DiscretizedCdf cdf = random_cdf(rng, 10, -3);
  std::vector<std::int64_t> symbols(300);
  for (auto& s : symbols) s = -3 + std::int64_t(rng.below(10));
  std::vector<DiscretizedCdf> cdfs(symbols.size(), cdf);
  CHECK(encode_symbols(symbols, cdfs) == encode_symbols(symbols, cdfs));
}

TEST_CASE("out-of-alphabet symbol is a hard error, never clamped") {
  DiscretizedCdf cdf = build_cdf(std::vector<double>{0.5, 0.5}, 10);
  RangeEncoder enc;
  CHECK_THROWS_AS(enc.encode(9, cdf), InvariantError);
  CHECK_THROWS_AS(enc.encode(12, cdf), InvariantError);
}

TEST_CASE("empty stream with count=0 decodes to the empty sequence") {
  std::vector<DiscretizedCdf> cdfs;
  std::vector<std::int64_t> out = decode_symbols(Bytes{}, cdfs, 0);
  CHECK(out.empty());
}

TEST_CASE("truncated stream raises a decode error, not garbage") {
  Rng rng(88);
  DiscretizedCdf cdf = random_cdf(rng, 32, 0);
  const std::size_t n = 400;
  std::vector<DiscretizedCdf> cdfs(n, cdf);
  std::vector<std::int64_t> symbols(n);
  for (auto& s : symbols) s = std::int64_t(rng.below(32));
  Bytes bytes = encode_symbols(symbols, cdfs);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_symbols(bytes, cdfs, n), DecodeError);
}

TEST_CASE("raw byte path round trips and costs 8 bits each") {
  RangeEncoder enc;
  for (int b = 0; b < 256; ++b) enc.encode_raw_byte(std::uint8_t(b));
  CHECK(enc.coded_bits() == doctest::Approx(256 * 8.0));
  Bytes bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (int b = 0; b < 256; ++b) CHECK(dec.decode_raw_byte() == std::uint8_t(b));
}

TEST_CASE("cdf validation rejects malformed tables") {
  DiscretizedCdf bad;
  bad.cum = {0, 0, 65536};  // zero-frequency symbol
  CHECK_THROWS_AS(bad.validate(), InvariantError);
  bad.cum = {0, 100, 65535};  // does not reach TOTAL
  CHECK_THROWS_AS(bad.validate(), InvariantError);
}
