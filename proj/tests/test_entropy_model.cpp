#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hemgs/entropy_model.hpp"

using namespace hemgs;

namespace {

// Independent oracle for P(a < Z <= b), Z ~ N(0,1): adaptive Simpson
// integration of the density (no erf/erfc involved).
double simpson(double a, double b, int n) {
  auto f = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double interval_prob_oracle(double za, double zb) {
  double lo = std::max(za, -12.0), hi = std::min(zb, 12.0);
  if (lo >= hi) return 0.0;
  return simpson(lo, hi, 4000);
}

struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed) {}
  double uniform() { return u01(s = splitmix64(s)); }
  double gauss() {
    double u1 = std::max(uniform(), 1e-15), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
};

}  // namespace

TEST_CASE("central bin probability matches an integration oracle") {
  // mu=0, sigma=1, s=1: p(symbol 0) = Phi(0.5) - Phi(-0.5) ~ 0.3829
  std::vector<double> pmf = symbol_pmf(0.0, 1.0, 1.0, -5, 5);
  double p0 = pmf[5];
  CHECK(p0 == doctest::Approx(0.3829).epsilon(2e-4));
  CHECK(p0 == doctest::Approx(interval_prob_oracle(-0.5, 0.5)).epsilon(1e-9));
}

TEST_CASE("normal_cdf agrees with the integration oracle across the range") {
  for (double z : {-8.0, -3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0, 8.0}) {
    double oracle = interval_prob_oracle(-12.0, z);
    CHECK(normal_cdf(z) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("pmf symmetry around a zero mean") {
  std::vector<double> pmf = symbol_pmf(0.0, 0.7, 0.3, -10, 10);
  for (int k = 0; k <= 10; ++k)
    CHECK(pmf[10 + k] == doctest::Approx(pmf[10 - k]).epsilon(1e-12));
}

TEST_CASE("huge step concentrates all mass on the symbol nearest mu/s") {
  double sigma = 0.5, s = sigma * 100.0;
  std::vector<double> pmf = symbol_pmf(0.2, sigma, s, -3, 3);
  CHECK(pmf[3] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pmf including the escape tail sums to 1 within 1e-9") {
  for (double mu : {-4.0, 0.0, 2.5}) {
    for (double sigma : {1e-4, 0.1, 2.0}) {
      std::vector<double> pmf = symbol_pmf(mu, sigma, 0.25, -8, 8);
      double sum = 0;
      for (double p : pmf) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      for (double p : pmf) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    }
  }
}

TEST_CASE("non-positive step is rejected") {
  CHECK_THROWS_AS(symbol_pmf(0, 1, 0.0, -1, 1), InvariantError);
  GaussianParams params{{0.0}, {1.0}};
  std::vector<double> step{-1.0}, values{0.0};
  CHECK_THROWS_AS(rate_bits(params, step, values, RateMode::Round), InvariantError);
}

TEST_CASE("rate_bits round mode: value at mu with floor sigma costs ~0 bits") {
  GaussianParams params{{3.0}, {kSigmaFloor}};
  std::vector<double> step{1.0}, values{3.0};
  double bits = rate_bits(params, step, values, RateMode::Round);
  CHECK(bits >= 0.0);
  CHECK(bits < 1e-6);
}

TEST_CASE("Monte-Carlo rate matches the differential-entropy estimate") {
  // N(0,1) data, fine step s: bits/element ~ -log2(s) + 0.5*log2(2*pi*e)
  Rng rng(2024);
  const std::size_t n = 10000;
  const double s = 0.01;
  GaussianParams params;
  params.mu.assign(n, 0.0);
  params.sigma.assign(n, 1.0);
  std::vector<double> step(n, s), values(n);
  for (auto& v : values) v = rng.gauss();
  double bits = rate_bits(params, step, values, RateMode::Round) / double(n);
  double expected = -std::log2(s) + 0.5 * std::log2(2.0 * M_PI * std::exp(1.0));
  CHECK(bits == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("noise and round modes agree for mid-bin values") {
  GaussianParams params{{0.1, -0.4}, {0.8, 0.5}};
  std::vector<double> step{0.25, 0.5};
  std::vector<double> values{0.25 * 2, 0.5 * -1};  // exactly on symbol centers
  std::vector<double> noise{0.5, 0.5};             // zero perturbation
  double a = rate_bits(params, step, values, RateMode::Round);
  double b = rate_bits(params, step, values, RateMode::Noise, noise);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("tail thickening: larger sigma never shrinks far-symbol probability") {
  for (int k = 4; k <= 12; ++k) {
    double prev = 0;
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      std::vector<double> pmf = symbol_pmf(0.0, sigma, 1.0, -16, 16);
      double p = pmf[16 + k];
      CHECK(p >= prev - 1e-15);
      prev = p;
    }
  }
}

TEST_CASE("rate_bits_grad matches central finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 6;
    GaussianParams params;
    std::vector<double> step(n), values(n), noise(n);
    for (std::size_t i = 0; i < n; ++i) {
      params.mu.push_back(rng.gauss() * 0.5);
      params.sigma.push_back(0.3 + rng.uniform());
      step[i] = 0.1 + 0.4 * rng.uniform();
      values[i] = rng.gauss();
      noise[i] = rng.uniform();
    }
    RateGrads g = rate_bits_grad(params, step, values, noise);
    auto loss = [&](GaussianParams p, std::vector<double> st, std::vector<double> va) {
      return rate_bits(p, st, va, RateMode::Noise, noise);
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
      auto check = [&](double analytic, auto&& bump) {
        GaussianParams p = params;
        std::vector<double> st = step, va = values;
        bump(p, st, va, +h);
        double up = loss(p, st, va);
        p = params;
        st = step;
        va = values;
        bump(p, st, va, -h);
        double dn = loss(p, st, va);
        double fd = (up - dn) / (2 * h);
        CHECK(analytic ==
              doctest::Approx(fd).epsilon(1e-4).scale(std::max(1.0, std::abs(fd))));
      };
      check(g.dmu[i], [&](GaussianParams& p, auto&, auto&, double d) { p.mu[i] += d; });
      check(g.dsigma[i],
            [&](GaussianParams& p, auto&, auto&, double d) { p.sigma[i] += d; });
      check(g.dstep[i], [&](GaussianParams&, auto& st, auto&, double d) { st[i] += d; });
      check(g.dvalues[i], [&](GaussianParams&, auto&, auto& va, double d) { va[i] += d; });
    }
  }
}

TEST_CASE("coding alphabet: window, escape placement, and valid cdf") {
  CodingAlphabet a = make_coding_alphabet(0.7, 0.4, 0.1);
  CHECK(a.lo <= 7);
  CHECK(a.hi >= 7);
  CHECK(a.escape_symbol() == a.hi + 1);
  CHECK(a.cdf.alphabet_size() == std::size_t(a.hi - a.lo + 2));
  a.cdf.validate();
  CHECK(a.in_window(7));
  CHECK(!a.in_window(a.hi + 5));
  // Window grows with sigma/step but stays bounded.
  CodingAlphabet wide = make_coding_alphabet(0.0, 100.0, 0.01);
  CHECK(wide.hi - wide.lo <= 2 * 160);
}

TEST_CASE("coding alphabet round trips through the range coder with escapes") {
  CodingAlphabet a = make_coding_alphabet(0.0, 0.5, 0.25);
  RangeEncoder enc;
  std::vector<std::int64_t> sent{0, 1, -2, a.hi + 40, 3};  // one out-of-window value
  for (std::int64_t k : sent) {
    if (a.in_window(k)) {
      enc.encode(k, a.cdf);
    } else {
      enc.encode(a.escape_symbol(), a.cdf);
      std::uint32_t u = std::uint32_t(std::int32_t(k));
      for (int b = 0; b < 4; ++b) enc.encode_raw_byte(std::uint8_t(u >> (8 * b)));
    }
  }
  Bytes bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (std::int64_t k : sent) {
    std::int64_t got = dec.decode(a.cdf);
    if (got == a.escape_symbol()) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= std::uint32_t(dec.decode_raw_byte()) << (8 * b);
      got = std::int64_t(std::int32_t(u));
    }
    CHECK(got == k);
  }
}
