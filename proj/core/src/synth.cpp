#include <cmath>
#include <unordered_set>

#include "hemgs/scene.hpp"

namespace hemgs {

namespace {

// Sequential deterministic RNG over splitmix64.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next_u64() { return splitmix64(state++); }
  double next_u01() { return u01(next_u64()); }
  double next_gauss() {
    // Box-Muller; one value per call.
    double u1 = next_u01();
    double u2 = next_u01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

std::uint64_t pack_voxel(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  return (std::uint64_t(x) << 42) | (std::uint64_t(y) << 21) | std::uint64_t(z);
}

float f32(double v) { return static_cast<float>(v); }

// Smooth random field: sum of three sinusoids of a normalized position.
struct SmoothField {
  std::array<std::array<double, 3>, 3> freq;
  std::array<double, 3> phase;
  std::array<double, 3> amp;

  static SmoothField make(Rng& rng, double amplitude) {
    SmoothField field;
    for (int j = 0; j < 3; ++j) {
      double mag = 6.283185307179586 * (1.0 + 3.0 * rng.next_u01() + 2.0 * j);
      double gx = rng.next_gauss(), gy = rng.next_gauss(), gz = rng.next_gauss();
      double norm = std::sqrt(gx * gx + gy * gy + gz * gz) + 1e-12;
      field.freq[j] = {mag * gx / norm, mag * gy / norm, mag * gz / norm};
      field.phase[j] = 6.283185307179586 * rng.next_u01();
      field.amp[j] = amplitude * (0.5 + rng.next_u01());
    }
    return field;
  }

  double eval(const Vec3& p) const {
    double v = 0;
    for (int j = 0; j < 3; ++j)
      v += amp[j] * std::sin(freq[j][0] * p[0] + freq[j][1] * p[1] + freq[j][2] * p[2] +
                             phase[j]);
    return v;
  }
};

}  // namespace

AnchorScene synth_scene(const SynthSpec& spec) {
  if (spec.anchor_count == 0 && spec.seed == 0 && spec.grid == 0)
    throw InvariantError("synth_scene: empty spec");
  std::uint32_t grid = spec.grid;
  // Keep occupancy below half so uniform sampling terminates quickly.
  while (std::uint64_t(grid) * grid * grid < 2 * std::uint64_t(spec.anchor_count)) grid *= 2;
  if (grid > 4096) throw InvariantError("synth_scene: anchor count too large for grid");

  AnchorScene scene;
  scene.feature_dim = spec.feature_dim;
  scene.offsets_per_anchor = spec.offsets_per_anchor;
  // Round through f32 up front: the scene file format stores f32, and scenes
  // must round-trip it bit-exactly.
  const double vs = double(f32(spec.voxel_size));
  scene.voxel_size = vs;
  scene.aabb.min = {0, 0, 0};
  double side = double(grid) * vs;
  scene.aabb.max = {f32(side), f32(side), f32(side)};

  Rng rng(splitmix64(spec.seed) ^ 0xa3b1c2d3e4f50617ULL);

  // Distinct voxel indices per spatial pattern.
  std::vector<std::array<std::uint32_t, 3>> voxels;
  std::unordered_set<std::uint64_t> seen;
  voxels.reserve(spec.anchor_count);

  auto try_add = [&](double vx, double vy, double vz) {
    if (vx < 0 || vy < 0 || vz < 0) return;
    auto x = std::uint32_t(vx), y = std::uint32_t(vy), z = std::uint32_t(vz);
    if (x >= grid || y >= grid || z >= grid) return;
    if (seen.insert(pack_voxel(x, y, z)).second) voxels.push_back({x, y, z});
  };

  const std::size_t n = spec.anchor_count;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 400 * (n + 16);

  std::size_t num_clusters = std::max<std::size_t>(1, n / 400);
  std::vector<Vec3> centers(num_clusters);
  for (auto& c : centers)
    c = {grid * rng.next_u01(), grid * rng.next_u01(), grid * rng.next_u01()};
  double cluster_sigma = std::max(2.0, grid / 18.0);

  while (voxels.size() < n && attempts < max_attempts) {
    ++attempts;
    switch (spec.pattern) {
      case SpatialPattern::Uniform:
        try_add(grid * rng.next_u01(), grid * rng.next_u01(), grid * rng.next_u01());
        break;
      case SpatialPattern::Clustered: {
        const Vec3& c = centers[rng.next_u64() % num_clusters];
        try_add(c[0] + cluster_sigma * rng.next_gauss(),
                c[1] + cluster_sigma * rng.next_gauss(),
                c[2] + cluster_sigma * rng.next_gauss());
        break;
      }
      case SpatialPattern::Planar: {
        double x = grid * rng.next_u01();
        double y = grid * rng.next_u01();
        double z = grid * (0.5 + 0.15 * std::sin(6.283185 * x / grid) *
                                     std::cos(6.283185 * y / grid)) +
                   1.2 * rng.next_gauss();
        try_add(x, y, z);
        break;
      }
    }
  }
  // Fill any shortfall deterministically (dense patterns on small grids).
  for (std::uint32_t x = 0; x < grid && voxels.size() < n; ++x)
    for (std::uint32_t y = 0; y < grid && voxels.size() < n; ++y)
      for (std::uint32_t z = 0; z < grid && voxels.size() < n; ++z)
        try_add(x, y, z);
  if (voxels.size() < n) throw InvariantError("synth_scene: could not place all anchors");

  // Smooth attribute fields (correlated mode). Per-channel fields over the
  // whole attribute vector keep cross-channel structure for the prior paths.
  const std::size_t scof = scene.scof_dim();
  std::vector<SmoothField> feat_fields, scof_fields;
  std::vector<double> feat_dens_amp, scof_dens_amp;
  if (spec.attributes == AttributeModel::SpatiallyCorrelated) {
    Rng frng(splitmix64(spec.seed ^ 0x5eedf1e1d5ULL));
    feat_fields.reserve(spec.feature_dim);
    for (std::uint32_t c = 0; c < spec.feature_dim; ++c) {
      feat_fields.push_back(SmoothField::make(frng, 0.55));
      feat_dens_amp.push_back(0.30 * (0.5 + frng.next_u01()));
    }
    scof_fields.reserve(scof);
    for (std::size_t c = 0; c < scof; ++c) {
      scof_fields.push_back(SmoothField::make(frng, 0.11));
      scof_dens_amp.push_back(0.06 * (0.5 + frng.next_u01()));
    }
  }

  // Local occupancy (5^3 voxel window), standardized over the scene: real
  // anchor attributes correlate with local geometry, not just position.
  std::vector<double> density(n, 0.0);
  if (spec.attributes == AttributeModel::SpatiallyCorrelated) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = voxels[i];
      int count = 0;
      for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy)
          for (int dz = -2; dz <= 2; ++dz) {
            std::int64_t x = std::int64_t(v[0]) + dx, y = std::int64_t(v[1]) + dy,
                         z = std::int64_t(v[2]) + dz;
            if (x < 0 || y < 0 || z < 0 || x >= grid || y >= grid || z >= grid) continue;
            if (seen.count(pack_voxel(std::uint32_t(x), std::uint32_t(y),
                                      std::uint32_t(z))))
              ++count;
          }
      density[i] = double(count);
    }
    double mean = 0, var = 0;
    for (double d : density) mean += d;
    mean /= double(n);
    for (double d : density) var += (d - mean) * (d - mean);
    double sd = std::sqrt(var / double(n));
    if (sd < 1e-9) sd = 1.0;
    for (double& d : density) d = (d - mean) / sd;
  }

  scene.anchors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Anchor& an = scene.anchors[i];
    const auto& v = voxels[i];
    // Voxel center plus jitter, margin 0.2 voxels so the 16-bit location
    // round trip stays inside the voxel.
    for (int a = 0; a < 3; ++a) {
      double jitter = 0.6 * (rng.next_u01() - 0.5);
      an.location[a] = f32((double(v[a]) + 0.5 + jitter) * vs);
    }
    Vec3 p = {an.location[0] / side, an.location[1] / side, an.location[2] / side};

    an.feature.resize(spec.feature_dim);
    an.scaling.resize(6);
    an.offsets.resize(3 * std::size_t(spec.offsets_per_anchor));
    if (spec.attributes == AttributeModel::IidGaussian) {
      for (auto& x : an.feature) x = f32(rng.next_gauss());
      for (auto& x : an.scaling) x = f32(0.2 * rng.next_gauss());
      for (auto& x : an.offsets) x = f32(0.2 * rng.next_gauss());
    } else {
      for (std::uint32_t c = 0; c < spec.feature_dim; ++c)
        an.feature[c] = f32(feat_fields[c].eval(p) + feat_dens_amp[c] * density[i] +
                            spec.noise_level * rng.next_gauss());
      for (std::size_t c = 0; c < 6; ++c)
        an.scaling[c] = f32(scof_fields[c].eval(p) + scof_dens_amp[c] * density[i] +
                            0.2 * spec.noise_level * rng.next_gauss());
      for (std::size_t c = 0; c < scof - 6; ++c)
        an.offsets[c] = f32(scof_fields[6 + c].eval(p) + scof_dens_amp[6 + c] * density[i] +
                            0.2 * spec.noise_level * rng.next_gauss());
    }
  }
  scene.validate();
  return scene;
}

}  // namespace hemgs
