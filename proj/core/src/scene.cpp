#include "hemgs/scene.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace hemgs {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

bool Anchor::all_finite() const {
  for (double v : location)
    if (!std::isfinite(v)) return false;
  for (const auto* vec : {&feature, &scaling, &offsets})
    for (double v : *vec)
      if (!std::isfinite(v)) return false;
  return true;
}

void AnchorScene::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!(aabb.min[a] < aabb.max[a]))
      throw InvariantError("aabb degenerate on axis " + std::to_string(a));
  if (!(voxel_size > 0)) throw InvariantError("voxel_size must be positive");
  if (feature_dim == 0) throw InvariantError("feature_dim must be positive");
  if (offsets_per_anchor == 0) throw InvariantError("offsets_per_anchor must be positive");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Anchor& an = anchors[i];
    if (!an.all_finite())
      throw InvariantError("anchor " + std::to_string(i) + " has non-finite values");
    if (!aabb.contains(an.location))
      throw InvariantError("anchor " + std::to_string(i) + " outside aabb");
    if (an.feature.size() != feature_dim)
      throw InvariantError("anchor " + std::to_string(i) + " feature_dim mismatch");
    if (an.scaling.size() != 6)
      throw InvariantError("anchor " + std::to_string(i) + " scaling must have 6 entries");
    if (an.offsets.size() != 3 * std::size_t(offsets_per_anchor))
      throw InvariantError("anchor " + std::to_string(i) + " offsets length mismatch");
  }
}

QuantLocation quantize_location(const Vec3& x, const Aabb& box) {
  QuantLocation out;
  for (int a = 0; a < 3; ++a) {
    double t = (x[a] - box.min[a]) / box.extent(a) * 65535.0;
    long q = std::lround(t);
    if (q < 0) q = 0;
    if (q > 65535) q = 65535;
    out.q[a] = static_cast<std::uint16_t>(q);
  }
  return out;
}

Vec3 dequantize_location(const QuantLocation& q, const Aabb& box) {
  Vec3 x;
  for (int a = 0; a < 3; ++a)
    x[a] = box.min[a] + double(q.q[a]) / 65535.0 * box.extent(a);
  return x;
}

// --- native binary format ---------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', '3', 'G', 'S'};
constexpr std::uint8_t kVersion = 1;

void put_f32(std::ostream& os, double v) {
  float f = static_cast<float>(v);
  os.write(reinterpret_cast<const char*>(&f), 4);
}

template <typename T>
void put_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError(std::string("truncated file while reading ") + what);
  return v;
}

double get_f32(std::istream& is, const char* what) {
  return double(get_raw<float>(is, what));
}

void check_record(const AnchorScene& scene, std::size_t idx) {
  const Anchor& an = scene.anchors[idx];
  if (!an.all_finite())
    throw ParseError("anchor record " + std::to_string(idx) + ": non-finite value");
  if (!scene.aabb.contains(an.location))
    throw ParseError("anchor record " + std::to_string(idx) + ": location outside aabb");
}

AnchorScene load_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("bad magic, not an A3GS scene file");
  auto version = get_raw<std::uint8_t>(is, "version");
  if (version != kVersion)
    throw ParseError("unsupported scene version " + std::to_string(version));
  AnchorScene scene;
  scene.feature_dim = get_raw<std::uint32_t>(is, "feature_dim");
  scene.offsets_per_anchor = get_raw<std::uint32_t>(is, "offsets_per_anchor");
  auto count = get_raw<std::uint64_t>(is, "anchor_count");
  for (int a = 0; a < 3; ++a) scene.aabb.min[a] = get_f32(is, "aabb.min");
  for (int a = 0; a < 3; ++a) scene.aabb.max[a] = get_f32(is, "aabb.max");
  scene.voxel_size = get_f32(is, "voxel_size");
  if (scene.feature_dim == 0 || scene.offsets_per_anchor == 0)
    throw ParseError("header declares zero feature_dim or offsets_per_anchor");
  for (int a = 0; a < 3; ++a)
    if (!(scene.aabb.min[a] < scene.aabb.max[a]))
      throw ParseError("header aabb degenerate on axis " + std::to_string(a));
  if (!(scene.voxel_size > 0)) throw ParseError("header voxel_size not positive");

  scene.anchors.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Anchor& an = scene.anchors[i];
    for (int a = 0; a < 3; ++a) an.location[a] = get_f32(is, "location");
    an.feature.resize(scene.feature_dim);
    for (auto& v : an.feature) v = get_f32(is, "feature");
    an.scaling.resize(6);
    for (auto& v : an.scaling) v = get_f32(is, "scaling");
    an.offsets.resize(3 * std::size_t(scene.offsets_per_anchor));
    for (auto& v : an.offsets) v = get_f32(is, "offsets");
    check_record(scene, i);
  }
  return scene;
}

void save_binary(const AnchorScene& scene, std::ostream& os) {
  os.write(kMagic, 4);
  put_raw(os, kVersion);
  put_raw(os, scene.feature_dim);
  put_raw(os, scene.offsets_per_anchor);
  put_raw(os, std::uint64_t(scene.anchors.size()));
  for (int a = 0; a < 3; ++a) put_f32(os, scene.aabb.min[a]);
  for (int a = 0; a < 3; ++a) put_f32(os, scene.aabb.max[a]);
  put_f32(os, scene.voxel_size);
  for (const Anchor& an : scene.anchors) {
    for (int a = 0; a < 3; ++a) put_f32(os, an.location[a]);
    for (double v : an.feature) put_f32(os, v);
    for (double v : an.scaling) put_f32(os, v);
    for (double v : an.offsets) put_f32(os, v);
  }
}

// --- ascii table ------------------------------------------------------------

AnchorScene load_ascii(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty ascii scene file");
  std::istringstream hs(line);
  std::string tag;
  int version = 0;
  AnchorScene scene;
  std::uint64_t count = 0;
  // Every stored quantity is f32; parse through float so ascii and binary
  // loads of the same scene agree bit-exactly.
  auto f32_field = [&](std::istream& s, double& v) {
    float f;
    if (s >> f) v = double(f);
  };
  hs >> tag >> version >> scene.feature_dim >> scene.offsets_per_anchor >> count;
  for (int a = 0; a < 3; ++a) f32_field(hs, scene.aabb.min[a]);
  for (int a = 0; a < 3; ++a) f32_field(hs, scene.aabb.max[a]);
  f32_field(hs, scene.voxel_size);
  if (!hs || tag != "A3GS-ASCII" || version != 1)
    throw ParseError("malformed ascii scene header");
  for (int a = 0; a < 3; ++a)
    if (!(scene.aabb.min[a] < scene.aabb.max[a]))
      throw ParseError("header aabb degenerate on axis " + std::to_string(a));
  const std::size_t row_len = 3 + scene.feature_dim + 6 + 3 * std::size_t(scene.offsets_per_anchor);
  scene.anchors.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::getline(is, line))
      throw ParseError("ascii scene truncated at row " + std::to_string(i));
    std::istringstream rs(line);
    std::vector<double> vals(row_len);
    for (std::size_t j = 0; j < row_len; ++j) {
      float f;
      if (!(rs >> f))
        throw ParseError("ascii row " + std::to_string(i) + ": expected " +
                         std::to_string(row_len) + " values");
      vals[j] = double(f);
    }
    Anchor& an = scene.anchors[i];
    std::size_t p = 0;
    for (int a = 0; a < 3; ++a) an.location[a] = vals[p++];
    an.feature.assign(vals.begin() + p, vals.begin() + p + scene.feature_dim);
    p += scene.feature_dim;
    an.scaling.assign(vals.begin() + p, vals.begin() + p + 6);
    p += 6;
    an.offsets.assign(vals.begin() + p, vals.end());
    check_record(scene, i);
  }
  return scene;
}

void save_ascii(const AnchorScene& scene, std::ostream& os) {
  os.precision(std::numeric_limits<float>::max_digits10);
  os << "A3GS-ASCII 1 " << scene.feature_dim << ' ' << scene.offsets_per_anchor << ' '
     << scene.anchors.size();
  for (int a = 0; a < 3; ++a) os << ' ' << scene.aabb.min[a];
  for (int a = 0; a < 3; ++a) os << ' ' << scene.aabb.max[a];
  os << ' ' << scene.voxel_size << '\n';
  for (const Anchor& an : scene.anchors) {
    for (int a = 0; a < 3; ++a) os << (a ? " " : "") << an.location[a];
    for (double v : an.feature) os << ' ' << v;
    for (double v : an.scaling) os << ' ' << v;
    for (double v : an.offsets) os << ' ' << v;
    os << '\n';
  }
}

}  // namespace

AnchorScene load_scene(const std::string& path, SceneFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open scene file: " + path);
  AnchorScene scene =
      format == SceneFormat::NativeBinary ? load_binary(is) : load_ascii(is);
  scene.validate();
  return scene;
}

void save_scene(const AnchorScene& scene, const std::string& path, SceneFormat format) {
  scene.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open scene file for writing: " + path);
  if (format == SceneFormat::NativeBinary)
    save_binary(scene, os);
  else
    save_ascii(scene, os);
  if (!os) throw IoError("I/O failure writing scene file: " + path);
}

bool scenes_equal(const AnchorScene& a, const AnchorScene& b) {
  if (a.anchors.size() != b.anchors.size() || a.feature_dim != b.feature_dim ||
      a.offsets_per_anchor != b.offsets_per_anchor || a.voxel_size != b.voxel_size ||
      a.aabb.min != b.aabb.min || a.aabb.max != b.aabb.max)
    return false;
  for (std::size_t i = 0; i < a.anchors.size(); ++i) {
    const Anchor& x = a.anchors[i];
    const Anchor& y = b.anchors[i];
    if (x.location != y.location || x.feature != y.feature || x.scaling != y.scaling ||
        x.offsets != y.offsets)
      return false;
  }
  return true;
}

}  // namespace hemgs
