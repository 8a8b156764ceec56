#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hemgs/range_coder.hpp"

namespace hemgs {

// Parameters of the per-element conditional Gaussian coding distribution,
// in value units. sigma is floored at kSigmaFloor by the producers.
struct GaussianParams {
  std::vector<double> mu;
  std::vector<double> sigma;
};

inline constexpr double kSigmaFloor = 1e-4;
// Probability clamp applied before cdf discretization (coder robustness).
inline constexpr double kProbFloor = 1.0 / double(1u << 24);

double normal_cdf(double z);
// P(a < X <= b) for X ~ N(0,1); accurate in both tails.
double gauss_interval_prob(double za, double zb);

// Probability mass of the quantized value k*step for symbols in
// [range_lo, range_hi]; the trailing entry is the escape symbol carrying the
// tail mass. Sums to 1 within 1e-9 (unclamped).
std::vector<double> symbol_pmf(double mu, double sigma, double step,
                               std::int64_t range_lo, std::int64_t range_hi);

// Coding alphabet for one element: a window of symbols centred on the
// predicted mean, sized by sigma/step, plus one escape symbol at the end of
// the alphabet. Values routed to escape are coded as raw 32-bit symbols.
struct CodingAlphabet {
  std::int64_t lo = 0;       // first regular symbol
  std::int64_t hi = 0;       // last regular symbol
  DiscretizedCdf cdf;        // alphabet [lo, hi] + escape at index hi-lo+1

  std::int64_t escape_symbol() const { return hi + 1; }
  bool in_window(std::int64_t k) const { return k >= lo && k <= hi; }
};

CodingAlphabet make_coding_alphabet(double mu, double sigma, double step);

enum class RateMode { Noise, Round };

// Cross-entropy surrogate: sum of -log2 p over elements. In Noise mode the
// value is perturbed to y + step*(xi - 0.5) with caller-supplied xi in [0,1)
// (deterministic noise source), keeping the estimate differentiable in
// mu, sigma, step and values.
double rate_bits(const GaussianParams& params, std::span<const double> step,
                 std::span<const double> values, RateMode mode,
                 std::span<const double> noise = {});

struct RateGrads {
  std::vector<double> dmu, dsigma, dstep, dvalues;
};

// Analytic gradient of rate_bits in Noise mode, scaled by `upstream`.
RateGrads rate_bits_grad(const GaussianParams& params, std::span<const double> step,
                         std::span<const double> values, std::span<const double> noise,
                         double upstream = 1.0);

}  // namespace hemgs
