#pragma once

#include <span>

#include "hemgs/nn.hpp"
#include "hemgs/scene.hpp"

namespace hemgs {

// Scene-agnostic point-feature extractor: a fixed-weight two-stage k-NN
// set-abstraction network (shared MLP over relative coordinates, max-pool per
// stage). Weights are identical across scenes, generated from a seeded
// initialization and shippable as a versioned asset file; they contribute
// nothing to per-scene storage.
class AgnosticExtractor {
 public:
  static AgnosticExtractor generate(std::uint32_t k, std::uint32_t hidden,
                                    std::uint32_t out_dim, std::uint64_t seed);
  static AgnosticExtractor generate_default();

  static AgnosticExtractor load(const std::string& path);
  void save(const std::string& path) const;

  std::uint32_t out_dim() const { return out_dim_; }
  std::uint32_t k() const { return k_; }
  std::uint64_t seed() const { return seed_; }

  // Per-anchor features; deterministic and permutation-equivariant. Relative
  // coordinates are measured in voxel units.
  std::vector<std::vector<double>> features(std::span<const Vec3> locations,
                                            double voxel_size) const;

 private:
  AgnosticExtractor() = default;
  std::uint32_t k_ = 16, hidden_ = 32, out_dim_ = 32;
  std::uint64_t seed_ = 0;
  Mlp stage1_, stage2_;
};

}  // namespace hemgs
