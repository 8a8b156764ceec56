#pragma once

#include <span>

#include "hemgs/scene.hpp"
#include "hemgs/voxel_hash.hpp"

namespace hemgs {

// Deterministic coding order: Morton code over voxel indices, ties broken by
// original anchor index. Computable from decoded locations alone, so the
// decoder reproduces it exactly.
struct CodingOrder {
  std::vector<std::uint32_t> perm;   // perm[rank] = anchor index
  std::vector<VoxelIndex> voxels;    // per anchor index
};

// Voxel index of a decoded anchor location.
VoxelIndex voxel_of(const Vec3& decoded_location, const Aabb& box, double voxel_size);

// strict: throw on duplicate voxel occupancy (anchor scenes carry one anchor
// per non-empty voxel; duplicates signal an ingest bug).
CodingOrder coding_order(std::span<const QuantLocation> qlocs, const Aabb& box,
                         double voxel_size, bool strict = true);

struct ContextNeighbor {
  std::uint32_t anchor;            // anchor index
  std::array<double, 3> rel;       // offset in voxel units (neighbor - target)
  double distance;                 // Euclidean, voxel units
};

// Previously-coded neighbors of one target anchor. dense means the candidate
// count in the receptive field strictly exceeded the threshold n.
struct ContextSet {
  std::vector<ContextNeighbor> neighbors;
  bool dense = false;
};

// Immutable spatial index over occupied voxels for one coding order.
class ContextIndex {
 public:
  explicit ContextIndex(const CodingOrder& order);
  const CodingOrder* order() const { return order_; }
  const VoxelHash& hash() const { return hash_; }
  std::uint32_t rank(std::uint32_t anchor) const { return rank_of_[anchor]; }

 private:
  const CodingOrder* order_;
  VoxelHash hash_;
  std::vector<std::uint32_t> rank_of_;
};

inline constexpr std::uint32_t kDefaultReceptiveField = 25;  // full extent, voxels
inline constexpr std::uint32_t kDefaultMaxContext = 20;

// Adaptive context selection: keep every previously-coded anchor inside the
// rf_extent^3 window when their count is <= max_context; otherwise keep the
// max_context nearest, ties broken by (distance, Morton, anchor index).
ContextSet select_context(const ContextIndex& index, std::uint32_t target_anchor,
                          std::uint32_t rf_extent = kDefaultReceptiveField,
                          std::uint32_t max_context = kDefaultMaxContext);

struct ContextStats {
  double average_selected = 0;
  std::size_t max_selected = 0;
  double sparse_fraction = 1.0;
};

ContextStats context_stats(const ContextIndex& index,
                           std::uint32_t rf_extent = kDefaultReceptiveField,
                           std::uint32_t max_context = kDefaultMaxContext);

}  // namespace hemgs
