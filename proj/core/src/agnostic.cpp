#include "hemgs/agnostic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hemgs/voxel_hash.hpp"

namespace hemgs {

namespace {
constexpr char kMagic[4] = {'A', '3', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kDefaultSeed = 0x9a1c3db5f4e80721ULL;

struct Cand {
  double dist2;
  std::uint64_t morton;
  std::uint32_t idx;
};

// Candidate order is derived from geometry only (distance, then Morton code
// of the voxel), so k-NN selection is invariant to input permutation.
bool cand_less(const Cand& a, const Cand& b) {
  if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
  return a.morton < b.morton;
}

double dist2(const Vec3& a, const Vec3& b) {
  double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

}  // namespace

AgnosticExtractor AgnosticExtractor::generate(std::uint32_t k, std::uint32_t hidden,
                                              std::uint32_t out_dim, std::uint64_t seed) {
  AgnosticExtractor ext;
  ext.k_ = k;
  ext.hidden_ = hidden;
  ext.out_dim_ = out_dim;
  ext.seed_ = seed;
  std::size_t w1[] = {3, hidden, hidden};
  Activation a1[] = {Activation::Relu, Activation::Relu};
  ext.stage1_ = Mlp::make(w1, a1);
  ext.stage1_.init_random(splitmix64(seed ^ 1));
  std::size_t w2[] = {3 + std::size_t(hidden), hidden, out_dim};
  Activation a2[] = {Activation::Relu, Activation::None};
  ext.stage2_ = Mlp::make(w2, a2);
  ext.stage2_.init_random(splitmix64(seed ^ 2));
  // The asset file stores f32 weights; round now so a generated extractor and
  // its saved/loaded copy produce identical features.
  for (Mlp* net : {&ext.stage1_, &ext.stage2_})
    for (auto& lay : net->layers) {
      for (double& w : lay.W) w = double(float(w));
      for (double& b : lay.b) b = double(float(b));
    }
  return ext;
}

AgnosticExtractor AgnosticExtractor::generate_default() {
  return generate(16, 32, 32, kDefaultSeed);
}

void AgnosticExtractor::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write extractor asset: " + path);
  os.write(kMagic, 4);
  auto put = [&](auto v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(kVersion);
  put(seed_);
  put(k_);
  put(hidden_);
  put(out_dim_);
  for (const Mlp* net : {&stage1_, &stage2_})
    for (const auto& lay : net->layers) {
      for (double w : lay.W) put(float(w));
      for (double b : lay.b) put(float(b));
    }
}

AgnosticExtractor AgnosticExtractor::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open extractor asset: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bad magic, not an extractor asset");
  auto get = [&](auto& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("truncated extractor asset");
  };
  std::uint32_t version;
  get(version);
  if (version != kVersion)
    throw ParseError("unsupported extractor asset version " + std::to_string(version));
  std::uint64_t seed;
  std::uint32_t k, hidden, out_dim;
  get(seed);
  get(k);
  get(hidden);
  get(out_dim);
  AgnosticExtractor ext = generate(k, hidden, out_dim, seed);
  for (Mlp* net : {&ext.stage1_, &ext.stage2_})
    for (auto& lay : net->layers) {
      for (double& w : lay.W) {
        float f;
        get(f);
        w = f;
      }
      for (double& b : lay.b) {
        float f;
        get(f);
        b = f;
      }
    }
  return ext;
}

std::vector<std::vector<double>> AgnosticExtractor::features(
    std::span<const Vec3> locations, double voxel_size) const {
  const std::size_t n = locations.size();
  if (n == 0) throw InvariantError("agnostic features: empty anchor set");
  if (!(voxel_size > 0)) throw InvariantError("agnostic features: bad voxel size");

  // Voxel indices relative to the point set's own min corner.
  Vec3 lo = locations[0];
  for (const Vec3& p : locations)
    for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]);
  std::vector<VoxelIndex> voxels(n);
  std::vector<std::uint64_t> mortons(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      double t = std::floor((locations[i][a] - lo[a]) / voxel_size);
      voxels[i][a] = std::uint32_t(std::min(t, double(0x1fffff)));
    }
    mortons[i] = morton_encode(voxels[i]);
  }

  const bool brute = n <= 2048;
  VoxelHash hash(brute ? 0 : n);
  if (!brute)
    for (std::size_t i = 0; i < n; ++i) hash.insert(voxels[i], std::uint32_t(i));

  // k nearest neighbors of anchor i (excluding itself); n==1 yields the
  // anchor itself as a single zero-offset pseudo-neighbor.
  auto knn = [&](std::size_t i) {
    std::vector<Cand> cands;
    if (n == 1) return std::vector<std::uint32_t>{std::uint32_t(i)};
    if (brute) {
      cands.reserve(n - 1);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) cands.push_back({dist2(locations[i], locations[j]), mortons[j],
                                     std::uint32_t(j)});
    } else {
      std::vector<std::uint32_t> hits;
      std::uint32_t radius = 1;
      double kth = 1e300;
      while (true) {
        // Scan the full Chebyshev box at this radius; cheap enough since
        // radii stay small in occupied regions.
        cands.clear();
        std::int64_t h = radius;
        for (std::int64_t dx = -h; dx <= h; ++dx)
          for (std::int64_t dy = -h; dy <= h; ++dy)
            for (std::int64_t dz = -h; dz <= h; ++dz) {
              std::int64_t x = std::int64_t(voxels[i][0]) + dx;
              std::int64_t y = std::int64_t(voxels[i][1]) + dy;
              std::int64_t z = std::int64_t(voxels[i][2]) + dz;
              if (x < 0 || y < 0 || z < 0) continue;
              VoxelIndex v{std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)};
              hits.clear();
              hash.find(v, hits);
              for (std::uint32_t j : hits)
                if (j != i)
                  cands.push_back({dist2(locations[i], locations[j]), mortons[j], j});
            }
        if (cands.size() >= k_) {
          std::nth_element(cands.begin(), cands.begin() + (k_ - 1), cands.end(),
                           cand_less);
          kth = cands[k_ - 1].dist2;
          // All points beyond the box start at distance >= (radius)*voxel
          // from anywhere inside the target's voxel.
          double safe = double(radius) * voxel_size;
          if (kth <= safe * safe) break;
        }
        if (radius > 0x1fffff) break;
        radius = radius < 8 ? radius * 2 : radius + 8;
        if (radius > 4096 && cands.size() >= std::min<std::size_t>(k_, n - 1)) break;
      }
    }
    std::size_t take = std::min<std::size_t>(k_, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + take, cands.end(), cand_less);
    std::vector<std::uint32_t> out(take);
    for (std::size_t t = 0; t < take; ++t) out[t] = cands[t].idx;
    return out;
  };

  std::vector<std::vector<std::uint32_t>> graph(n);
  for (std::size_t i = 0; i < n; ++i) graph[i] = knn(i);

  // Stage 1: shared MLP on relative coordinates, max-pool.
  const std::size_t H = hidden_;
  std::vector<std::vector<double>> h1(n);
  std::vector<double> rel(3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pooled(H, -1e300);
    for (std::uint32_t j : graph[i]) {
      for (int a = 0; a < 3; ++a)
        rel[a] = (locations[j][a] - locations[i][a]) / voxel_size;
      std::vector<double> f = stage1_.forward(rel);
      for (std::size_t c = 0; c < H; ++c) pooled[c] = std::max(pooled[c], f[c]);
    }
    h1[i] = std::move(pooled);
  }

  // Stage 2: relative coordinates joined with the neighbor's stage-1 feature.
  std::vector<std::vector<double>> out(n);
  std::vector<double> in2(3 + H);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pooled(out_dim_, -1e300);
    for (std::uint32_t j : graph[i]) {
      for (int a = 0; a < 3; ++a)
        in2[a] = (locations[j][a] - locations[i][a]) / voxel_size;
      std::copy(h1[j].begin(), h1[j].end(), in2.begin() + 3);
      std::vector<double> f = stage2_.forward(in2);
      for (std::size_t c = 0; c < out_dim_; ++c) pooled[c] = std::max(pooled[c], f[c]);
    }
    out[i] = std::move(pooled);
  }
  return out;
}

}  // namespace hemgs
