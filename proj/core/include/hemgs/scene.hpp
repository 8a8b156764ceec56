#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hemgs/common.hpp"

namespace hemgs {

using Vec3 = std::array<double, 3>;

struct Aabb {
  Vec3 min{0, 0, 0};
  Vec3 max{1, 1, 1};

  double extent(int axis) const { return max[axis] - min[axis]; }
  bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < min[a] || p[a] > max[a]) return false;
    return true;
  }
};

// One anchor: a location plus its attributes (local feature, 6-vector
// scaling, flattened 3*K offsets). Values are held as doubles but always
// originate from 32-bit floats, so binary round trips are exact.
struct Anchor {
  Vec3 location{0, 0, 0};
  std::vector<double> feature;
  std::vector<double> scaling;  // length 6
  std::vector<double> offsets;  // length 3*offsets_per_anchor

  bool all_finite() const;
};

struct AnchorScene {
  std::vector<Anchor> anchors;
  Aabb aabb;
  double voxel_size = 1.0;
  std::uint32_t feature_dim = 32;
  std::uint32_t offsets_per_anchor = 10;

  std::size_t size() const { return anchors.size(); }
  std::size_t scof_dim() const { return 6 + 3 * std::size_t(offsets_per_anchor); }

  // Throws InvariantError when a scene invariant is violated.
  void validate() const;
};

enum class SceneFormat { NativeBinary, AsciiTable };

AnchorScene load_scene(const std::string& path, SceneFormat format);
void save_scene(const AnchorScene& scene, const std::string& path, SceneFormat format);

// Exact field-wise equality (used by round-trip tests).
bool scenes_equal(const AnchorScene& a, const AnchorScene& b);

// --- 16-bit location quantization -----------------------------------------

struct QuantLocation {
  std::array<std::uint16_t, 3> q;
};

// q = round((x - min) / extent * 65535), clamped to [0, 65535].
QuantLocation quantize_location(const Vec3& x, const Aabb& box);
// xbar = min + q / 65535 * extent
Vec3 dequantize_location(const QuantLocation& q, const Aabb& box);

// --- Synthetic scenes -------------------------------------------------------

enum class SpatialPattern { Uniform, Clustered, Planar };
enum class AttributeModel { IidGaussian, SpatiallyCorrelated };

struct SynthSpec {
  std::size_t anchor_count = 0;
  std::uint64_t seed = 0;
  SpatialPattern pattern = SpatialPattern::Uniform;
  AttributeModel attributes = AttributeModel::IidGaussian;
  std::uint32_t feature_dim = 32;
  std::uint32_t offsets_per_anchor = 10;
  // Voxel grid resolution per axis; aabb is [0, grid*voxel_size]^3.
  std::uint32_t grid = 64;
  double voxel_size = 0.1;
  // Correlated mode: attribute value = smooth field(location) + noise*N(0,1).
  double noise_level = 0.25;
};

// Deterministic generator; one anchor per occupied voxel, placed so that
// 16-bit location quantization keeps it inside the same voxel.
AnchorScene synth_scene(const SynthSpec& spec);

}  // namespace hemgs
