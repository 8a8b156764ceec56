#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hemgs/nn.hpp"

namespace hemgs {

struct HashGridConfig {
  std::uint32_t levels = 8;
  std::uint32_t base_resolution = 16;
  std::uint32_t max_resolution = 512;
  std::uint32_t table_size = 1u << 15;  // entries per level
  std::uint32_t feature_dim = 2;
};

// Multi-resolution hash grid over [0,1]^3 with trilinear interpolation.
// Resolutions follow a geometric progression; table slots are addressed by
// the three-large-prime XOR spatial hash. Output width = levels*feature_dim.
class HashGrid {
 public:
  explicit HashGrid(const HashGridConfig& cfg);
  void init_random(std::uint64_t seed, double scale = 1e-2);

  const HashGridConfig& config() const { return cfg_; }
  std::size_t out_dim() const { return cfg_.levels * cfg_.feature_dim; }
  std::uint32_t resolution(std::uint32_t level) const { return resolutions_[level]; }

  struct Cache {
    // Per (level, corner): table slot and interpolation weight.
    std::vector<std::uint32_t> slots;  // levels*8
    std::vector<double> weights;       // levels*8
  };

  // location must lie in [0,1]^3; throws otherwise.
  std::vector<double> query(const std::array<double, 3>& location,
                            Cache* cache = nullptr) const;
  // Accumulates d(output)/d(table entries) into grads (same layout as tables).
  void backward(const Cache& cache, std::span<const double> dy,
                std::vector<std::vector<double>>& grads) const;

  std::vector<std::vector<double>>& tables() { return tables_; }
  const std::vector<std::vector<double>>& tables() const { return tables_; }
  std::vector<std::vector<double>> make_grads() const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

 private:
  std::uint32_t slot_index(std::uint32_t level, std::uint32_t x, std::uint32_t y,
                           std::uint32_t z) const;

  HashGridConfig cfg_;
  std::vector<std::uint32_t> resolutions_;
  std::vector<std::vector<double>> tables_;  // levels x (table_size*feature_dim)
};

}  // namespace hemgs
