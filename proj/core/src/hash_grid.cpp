#include "hemgs/hash_grid.hpp"

#include <cmath>

namespace hemgs {

namespace {
// Classic spatial-hash primes.
constexpr std::uint32_t kP1 = 73856093u;
constexpr std::uint32_t kP2 = 19349663u;
constexpr std::uint32_t kP3 = 83492791u;
}  // namespace

HashGrid::HashGrid(const HashGridConfig& cfg) : cfg_(cfg) {
  if (cfg.levels == 0 || cfg.feature_dim == 0 || cfg.table_size == 0)
    throw InvariantError("HashGrid: empty configuration");
  resolutions_.resize(cfg.levels);
  double growth = cfg.levels > 1 ? std::exp(std::log(double(cfg.max_resolution) /
                                                     double(cfg.base_resolution)) /
                                            double(cfg.levels - 1))
                                 : 1.0;
  for (std::uint32_t l = 0; l < cfg.levels; ++l)
    resolutions_[l] =
        std::uint32_t(std::floor(double(cfg.base_resolution) * std::pow(growth, l) + 0.5));
  tables_.assign(cfg.levels, std::vector<double>(std::size_t(cfg.table_size) * cfg.feature_dim, 0.0));
}

void HashGrid::init_random(std::uint64_t seed, double scale) {
  std::uint64_t ctr = 1;
  for (auto& table : tables_)
    for (double& v : table)
      v = scale * (2.0 * u01(splitmix64(seed ^ ctr++)) - 1.0);
}

std::uint32_t HashGrid::slot_index(std::uint32_t level, std::uint32_t x, std::uint32_t y,
                                   std::uint32_t z) const {
  std::uint32_t res = resolutions_[level];
  std::uint64_t dense = (std::uint64_t(res) + 1) * (res + 1) * (res + 1);
  if (dense <= cfg_.table_size) {
    // Collision-free dense indexing when the level fits its table.
    return (x * (res + 1) + y) * (res + 1) + z;
  }
  return (x * kP1 ^ y * kP2 ^ z * kP3) % cfg_.table_size;
}

std::vector<double> HashGrid::query(const std::array<double, 3>& location,
                                    Cache* cache) const {
  for (double v : location)
    if (!(v >= 0.0 && v <= 1.0))
      throw InvariantError("HashGrid::query: location outside [0,1]^3");
  const std::uint32_t F = cfg_.feature_dim;
  std::vector<double> out(out_dim(), 0.0);
  if (cache) {
    cache->slots.assign(std::size_t(cfg_.levels) * 8, 0);
    cache->weights.assign(std::size_t(cfg_.levels) * 8, 0.0);
  }
  for (std::uint32_t l = 0; l < cfg_.levels; ++l) {
    const std::uint32_t res = resolutions_[l];
    double sx = location[0] * res, sy = location[1] * res, sz = location[2] * res;
    std::uint32_t x0 = std::uint32_t(std::min(std::floor(sx), double(res - 1) + 0.0));
    std::uint32_t y0 = std::uint32_t(std::min(std::floor(sy), double(res - 1) + 0.0));
    std::uint32_t z0 = std::uint32_t(std::min(std::floor(sz), double(res - 1) + 0.0));
    // At the far face (coordinate exactly 1) the cell base clamps to res-1
    // and the fraction becomes 1, which selects the face corner exactly.
    double tx = sx - x0, ty = sy - y0, tz = sz - z0;
    const std::vector<double>& table = tables_[l];
    for (int c = 0; c < 8; ++c) {
      std::uint32_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
      std::uint32_t slot = slot_index(l, x0 + dx, y0 + dy, z0 + dz);
      if (cache) {
        cache->slots[l * 8 + c] = slot;
        cache->weights[l * 8 + c] = w;
      }
      if (w == 0.0) continue;
      const double* feat = table.data() + std::size_t(slot) * F;
      for (std::uint32_t f = 0; f < F; ++f) out[l * F + f] += w * feat[f];
    }
  }
  return out;
}

void HashGrid::backward(const Cache& cache, std::span<const double> dy,
                        std::vector<std::vector<double>>& grads) const {
  const std::uint32_t F = cfg_.feature_dim;
  if (dy.size() != out_dim()) throw InvariantError("HashGrid::backward: dim mismatch");
  for (std::uint32_t l = 0; l < cfg_.levels; ++l) {
    for (int c = 0; c < 8; ++c) {
      double w = cache.weights[l * 8 + c];
      if (w == 0.0) continue;
      double* g = grads[l].data() + std::size_t(cache.slots[l * 8 + c]) * F;
      for (std::uint32_t f = 0; f < F; ++f) g[f] += w * dy[l * F + f];
    }
  }
}

std::vector<std::vector<double>> HashGrid::make_grads() const {
  std::vector<std::vector<double>> g(tables_.size());
  for (std::size_t l = 0; l < tables_.size(); ++l) g[l].assign(tables_[l].size(), 0.0);
  return g;
}

void HashGrid::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < tables_.size(); ++l)
    out.push_back({prefix + ".level" + std::to_string(l), tables_[l].data(),
                   tables_[l].size()});
}

}  // namespace hemgs
