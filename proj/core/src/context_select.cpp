#include "hemgs/context_select.hpp"

#include <algorithm>
#include <cmath>

namespace hemgs {

namespace {

std::uint64_t spread_bits(std::uint32_t v) {
  std::uint64_t x = v & 0x1fffff;  // 21 bits
  x = (x | x << 32) & 0x1f00000000ffffULL;
  x = (x | x << 16) & 0x1f0000ff0000ffULL;
  x = (x | x << 8) & 0x100f00f00f00f00fULL;
  x = (x | x << 4) & 0x10c30c30c30c30c3ULL;
  x = (x | x << 2) & 0x1249249249249249ULL;
  return x;
}

}  // namespace

std::uint64_t morton_encode(const VoxelIndex& v) {
  return spread_bits(v[0]) | (spread_bits(v[1]) << 1) | (spread_bits(v[2]) << 2);
}

// --- VoxelHash --------------------------------------------------------------

VoxelHash::VoxelHash(std::size_t expected) {
  std::size_t cap = 16;
  while (cap < 2 * expected + 1) cap <<= 1;
  slots_.assign(cap, {});
  mask_ = cap - 1;
}

void VoxelHash::grow() {
  std::vector<Slot> old = std::move(slots_);
  slots_.assign(old.size() * 2, {});
  mask_ = slots_.size() - 1;
  count_ = 0;
  for (const Slot& s : old)
    if (s.key != kEmpty) {
      std::uint64_t i = splitmix64(s.key) & mask_;
      while (slots_[i].key != kEmpty) i = (i + 1) & mask_;
      slots_[i] = s;
      ++count_;
    }
}

void VoxelHash::insert(const VoxelIndex& v, std::uint32_t value) {
  if (2 * (count_ + 1) > slots_.size()) grow();
  std::uint64_t key = key_of(v);
  std::uint64_t i = splitmix64(key) & mask_;
  while (slots_[i].key != kEmpty) i = (i + 1) & mask_;
  slots_[i] = {key, value};
  ++count_;
}

void VoxelHash::find(const VoxelIndex& v, std::vector<std::uint32_t>& out) const {
  std::uint64_t key = key_of(v);
  std::uint64_t i = splitmix64(key) & mask_;
  while (slots_[i].key != kEmpty) {
    if (slots_[i].key == key) out.push_back(slots_[i].value);
    i = (i + 1) & mask_;
  }
}

std::uint32_t VoxelHash::find_one(const VoxelIndex& v) const {
  std::uint64_t key = key_of(v);
  std::uint64_t i = splitmix64(key) & mask_;
  while (slots_[i].key != kEmpty) {
    if (slots_[i].key == key) return slots_[i].value;
    i = (i + 1) & mask_;
  }
  return ~0u;
}

// --- voxelization and coding order -----------------------------------------

VoxelIndex voxel_of(const Vec3& decoded_location, const Aabb& box, double voxel_size) {
  VoxelIndex v;
  for (int a = 0; a < 3; ++a) {
    double t = (decoded_location[a] - box.min[a]) / voxel_size;
    double cells = box.extent(a) / voxel_size;
    long idx = long(std::floor(t));
    if (idx < 0) idx = 0;
    // Locations exactly on the far face belong to the last cell.
    long last = long(std::ceil(cells)) - 1;
    if (idx > last) idx = last;
    if (idx > 0x1fffff)
      throw InvariantError("voxel index exceeds 21-bit Morton range");
    v[a] = std::uint32_t(idx);
  }
  return v;
}

CodingOrder coding_order(std::span<const QuantLocation> qlocs, const Aabb& box,
                         double voxel_size, bool strict) {
  const std::size_t n = qlocs.size();
  CodingOrder order;
  order.perm.resize(n);
  order.voxels.resize(n);
  std::vector<std::uint64_t> codes(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.voxels[i] = voxel_of(dequantize_location(qlocs[i], box), box, voxel_size);
    codes[i] = morton_encode(order.voxels[i]);
  }
  for (std::size_t i = 0; i < n; ++i) order.perm[i] = std::uint32_t(i);
  std::sort(order.perm.begin(), order.perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (codes[a] != codes[b]) return codes[a] < codes[b];
    return a < b;
  });
  if (strict) {
    for (std::size_t i = 1; i < n; ++i)
      if (codes[order.perm[i]] == codes[order.perm[i - 1]])
        throw InvariantError("duplicate voxel occupancy at anchor " +
                             std::to_string(order.perm[i]));
  }
  return order;
}

// --- context selection ------------------------------------------------------

ContextIndex::ContextIndex(const CodingOrder& order) : order_(&order) {
  const std::size_t n = order.perm.size();
  hash_ = VoxelHash(n);
  rank_of_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::uint32_t anchor = order.perm[r];
    rank_of_[anchor] = std::uint32_t(r);
    hash_.insert(order.voxels[anchor], anchor);
  }
}

ContextSet select_context(const ContextIndex& index, std::uint32_t target_anchor,
                          std::uint32_t rf_extent, std::uint32_t max_context) {
  const CodingOrder& order = *index.order();
  const VoxelIndex tv = order.voxels[target_anchor];
  const std::uint32_t target_rank = index.rank(target_anchor);
  const std::int64_t half = std::int64_t(rf_extent) / 2;

  struct Cand {
    double dist2;
    std::uint64_t morton;
    std::uint32_t anchor;
    std::array<double, 3> rel;
  };
  std::vector<Cand> cands;
  std::vector<std::uint32_t> hits;
  for (std::int64_t dx = -half; dx <= half; ++dx) {
    std::int64_t x = std::int64_t(tv[0]) + dx;
    if (x < 0) continue;
    for (std::int64_t dy = -half; dy <= half; ++dy) {
      std::int64_t y = std::int64_t(tv[1]) + dy;
      if (y < 0) continue;
      for (std::int64_t dz = -half; dz <= half; ++dz) {
        std::int64_t z = std::int64_t(tv[2]) + dz;
        if (z < 0) continue;
        VoxelIndex v{std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)};
        hits.clear();
        index.hash().find(v, hits);
        for (std::uint32_t anchor : hits) {
          if (index.rank(anchor) >= target_rank) continue;  // causality
          Cand c;
          c.rel = {double(dx), double(dy), double(dz)};
          c.dist2 = c.rel[0] * c.rel[0] + c.rel[1] * c.rel[1] + c.rel[2] * c.rel[2];
          c.morton = morton_encode(v);
          c.anchor = anchor;
          cands.push_back(c);
        }
      }
    }
  }

  ContextSet ctx;
  ctx.dense = cands.size() > max_context;
  if (ctx.dense) {
    // Nearest max_context by (distance, Morton, anchor index).
    std::nth_element(cands.begin(), cands.begin() + max_context, cands.end(),
                     [](const Cand& a, const Cand& b) {
                       if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
                       if (a.morton != b.morton) return a.morton < b.morton;
                       return a.anchor < b.anchor;
                     });
    cands.resize(max_context);
  }
  // Deterministic neighbor order inside the set (coding rank).
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    return index.rank(a.anchor) < index.rank(b.anchor);
  });
  ctx.neighbors.reserve(cands.size());
  for (const Cand& c : cands)
    ctx.neighbors.push_back({c.anchor, c.rel, std::sqrt(c.dist2)});
  return ctx;
}

ContextStats context_stats(const ContextIndex& index, std::uint32_t rf_extent,
                           std::uint32_t max_context) {
  const std::size_t n = index.order()->perm.size();
  ContextStats st;
  if (n == 0) return st;
  std::size_t sparse = 0, total = 0, maxc = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::uint32_t anchor = index.order()->perm[r];
    ContextSet ctx = select_context(index, anchor, rf_extent, max_context);
    total += ctx.neighbors.size();
    maxc = std::max(maxc, ctx.neighbors.size());
    if (!ctx.dense) ++sparse;
  }
  st.average_selected = double(total) / double(n);
  st.max_selected = maxc;
  st.sparse_fraction = double(sparse) / double(n);
  return st;
}

}  // namespace hemgs
