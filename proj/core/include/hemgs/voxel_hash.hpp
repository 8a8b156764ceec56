#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hemgs/common.hpp"

namespace hemgs {

using VoxelIndex = std::array<std::uint32_t, 3>;

// 63-bit Morton (Z-order) code, 21 bits per axis, z-y-x interleave with x in
// the lowest bit.
std::uint64_t morton_encode(const VoxelIndex& v);

// Open-addressed hash over occupied voxels. Values are anchor ranks; multiple
// entries with the same key are allowed (queries return all of them).
class VoxelHash {
 public:
  explicit VoxelHash(std::size_t expected = 0);
  void insert(const VoxelIndex& v, std::uint32_t value);
  // Appends all values stored at v to out.
  void find(const VoxelIndex& v, std::vector<std::uint32_t>& out) const;
  // Single-occupancy lookup: returns the first value at v, or UINT32_MAX.
  std::uint32_t find_one(const VoxelIndex& v) const;
  std::size_t size() const { return count_; }

 private:
  void grow();
  static std::uint64_t key_of(const VoxelIndex& v) {
    return (std::uint64_t(v[0]) << 42) | (std::uint64_t(v[1]) << 21) | v[2];
  }

  struct Slot {
    std::uint64_t key = kEmpty;
    std::uint32_t value = 0;
  };
  static constexpr std::uint64_t kEmpty = ~0ULL;
  std::vector<Slot> slots_;
  std::size_t count_ = 0;
  std::uint64_t mask_ = 0;
};

}  // namespace hemgs
