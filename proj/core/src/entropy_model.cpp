#include "hemgs/entropy_model.hpp"

#include <cmath>

namespace hemgs {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
// Loss clamp keeping -log2 p bounded in training.
constexpr double kRateProbFloor = 1e-12;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double gauss_interval_prob(double za, double zb) {
  if (za >= zb) return 0.0;
  // Evaluate in the tail with erfc to avoid cancellation.
  if (za >= 0)
    return 0.5 * (std::erfc(za * kInvSqrt2) - std::erfc(zb * kInvSqrt2));
  if (zb <= 0)
    return 0.5 * (std::erfc(-zb * kInvSqrt2) - std::erfc(-za * kInvSqrt2));
  return normal_cdf(zb) - normal_cdf(za);
}

std::vector<double> symbol_pmf(double mu, double sigma, double step,
                               std::int64_t range_lo, std::int64_t range_hi) {
  if (!(step > 0)) throw InvariantError("symbol_pmf: non-positive step");
  if (range_hi < range_lo) throw InvariantError("symbol_pmf: empty symbol range");
  if (sigma < kSigmaFloor) sigma = kSigmaFloor;
  std::vector<double> pmf;
  pmf.reserve(std::size_t(range_hi - range_lo) + 2);
  double tail = 0;
  for (std::int64_t k = range_lo; k <= range_hi; ++k) {
    double za = (double(k) * step - 0.5 * step - mu) / sigma;
    double zb = (double(k) * step + 0.5 * step - mu) / sigma;
    pmf.push_back(gauss_interval_prob(za, zb));
  }
  // Escape: everything outside the window.
  double zlo = (double(range_lo) * step - 0.5 * step - mu) / sigma;
  double zhi = (double(range_hi) * step + 0.5 * step - mu) / sigma;
  tail = normal_cdf(zlo) + (0.5 * std::erfc(zhi * kInvSqrt2));
  pmf.push_back(tail);
  return pmf;
}

CodingAlphabet make_coding_alphabet(double mu, double sigma, double step) {
  if (!(step > 0)) throw InvariantError("make_coding_alphabet: non-positive step");
  if (sigma < kSigmaFloor) sigma = kSigmaFloor;
  const std::int64_t k0 = std::llround(mu / step);
  // Window wide enough that escapes are rare; capped to keep cdf building
  // O(window) per element.
  std::int64_t half = std::int64_t(std::ceil(5.0 * sigma / step)) + 2;
  if (half > 160) half = 160;
  CodingAlphabet alpha;
  alpha.lo = k0 - half;
  alpha.hi = k0 + half;
  std::vector<double> pmf = symbol_pmf(mu, sigma, step, alpha.lo, alpha.hi);
  for (double& p : pmf)
    if (p < kProbFloor) p = kProbFloor;
  alpha.cdf = build_cdf(pmf, alpha.lo);
  return alpha;
}

double rate_bits(const GaussianParams& params, std::span<const double> step,
                 std::span<const double> values, RateMode mode,
                 std::span<const double> noise) {
  const std::size_t n = values.size();
  if (params.mu.size() != n || params.sigma.size() != n || step.size() != n)
    throw InvariantError("rate_bits: shape mismatch");
  if (mode == RateMode::Noise && noise.size() != n)
    throw InvariantError("rate_bits: noise mode requires one draw per element");
  double bits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = step[i];
    if (!(s > 0)) throw InvariantError("rate_bits: non-positive step");
    double sigma = std::max(params.sigma[i], kSigmaFloor);
    double center = mode == RateMode::Noise
                        ? values[i] + s * (noise[i] - 0.5)
                        : double(std::llround(values[i] / s)) * s;
    double za = (center - 0.5 * s - params.mu[i]) / sigma;
    double zb = (center + 0.5 * s - params.mu[i]) / sigma;
    double p = gauss_interval_prob(za, zb);
    if (p < kRateProbFloor) p = kRateProbFloor;
    bits -= std::log2(p);
  }
  return bits;
}

RateGrads rate_bits_grad(const GaussianParams& params, std::span<const double> step,
                         std::span<const double> values, std::span<const double> noise,
                         double upstream) {
  const std::size_t n = values.size();
  if (params.mu.size() != n || params.sigma.size() != n || step.size() != n ||
      noise.size() != n)
    throw InvariantError("rate_bits_grad: shape mismatch");
  RateGrads g;
  g.dmu.assign(n, 0);
  g.dsigma.assign(n, 0);
  g.dstep.assign(n, 0);
  g.dvalues.assign(n, 0);
  constexpr double kInvLn2 = 1.4426950408889634;
  for (std::size_t i = 0; i < n; ++i) {
    double s = step[i];
    double sigma = std::max(params.sigma[i], kSigmaFloor);
    bool floored = params.sigma[i] < kSigmaFloor;
    double center = values[i] + s * (noise[i] - 0.5);
    double ca = center - 0.5 * s;
    double cb = center + 0.5 * s;
    double za = (ca - params.mu[i]) / sigma;
    double zb = (cb - params.mu[i]) / sigma;
    double p = gauss_interval_prob(za, zb);
    if (p < kRateProbFloor) continue;  // clamped region: zero gradient
    double phia = normal_pdf(za);
    double phib = normal_pdf(zb);
    // d(-log2 p) = -1/(p ln 2) * dp
    double scale = -upstream * kInvLn2 / p;
    // dp/d(bound) through z = (c - mu)/sigma
    double dp_dca = -phia / sigma;
    double dp_dcb = phib / sigma;
    g.dmu[i] = scale * (-(phib - phia) / sigma);
    g.dsigma[i] = floored ? 0.0 : scale * (-(phib * zb - phia * za) / sigma);
    // ca, cb depend on value, step, noise draw.
    double dca_ds = noise[i] - 1.0;  // (xi - 0.5) - 0.5
    double dcb_ds = noise[i];        // (xi - 0.5) + 0.5
    g.dstep[i] = scale * (dp_dca * dca_ds + dp_dcb * dcb_ds);
    g.dvalues[i] = scale * (dp_dca + dp_dcb);
  }
  return g;
}

}  // namespace hemgs
