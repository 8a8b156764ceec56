#include "hemgs/codec.hpp"

#include <cmath>
#include <cstring>

namespace hemgs {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'G', 'S'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kNumSections = 4;  // LOC, FEAT, SCOF, SIDE

struct Writer {
  Bytes out;
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_f32(double v) { put(float(v)); }
  void put_bytes(const Bytes& b) { out.insert(out.end(), b.begin(), b.end()); }
};

struct Reader {
  const Bytes& in;
  std::size_t pos = 0;
  explicit Reader(const Bytes& b) : in(b) {}
  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > in.size())
      throw DecodeError(std::string("truncated stream while reading ") + what);
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  double get_f32(const char* what) { return double(get<float>(what)); }
};

struct Header {
  std::uint64_t anchor_count = 0;
  std::uint32_t feature_dim = 0, offsets_per_anchor = 0;
  Aabb aabb;
  double voxel_size = 0, lambda = 0;
  std::uint64_t digest = 0;
  double est_feat_coder = 0, est_feat_model = 0;
  double est_scof_coder = 0, est_scof_model = 0;
  double est_scaling_model = 0, est_offsets_model = 0;
  std::uint64_t escape_count = 0;
  std::array<std::uint64_t, kNumSections> offsets{};
  std::array<std::uint64_t, kNumSections> lengths{};
};

void write_header(Writer& w, const Header& h) {
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.put(kVersion);
  w.put(h.anchor_count);
  w.put(h.feature_dim);
  w.put(h.offsets_per_anchor);
  for (int a = 0; a < 3; ++a) w.put_f32(h.aabb.min[a]);
  for (int a = 0; a < 3; ++a) w.put_f32(h.aabb.max[a]);
  w.put_f32(h.voxel_size);
  w.put_f32(h.lambda);
  w.put(h.digest);
  w.put(h.est_feat_coder);
  w.put(h.est_feat_model);
  w.put(h.est_scof_coder);
  w.put(h.est_scof_model);
  w.put(h.est_scaling_model);
  w.put(h.est_offsets_model);
  w.put(h.escape_count);
  for (std::size_t s = 0; s < kNumSections; ++s) {
    w.put(h.offsets[s]);
    w.put(h.lengths[s]);
  }
}

Header read_header(Reader& r) {
  if (r.in.size() < 4 || std::memcmp(r.in.data(), kMagic, 4) != 0)
    throw DecodeError("bad magic, not an HMGS bitstream");
  r.pos = 4;
  auto version = r.get<std::uint8_t>("version");
  if (version != kVersion)
    throw DecodeError("unsupported bitstream version " + std::to_string(version));
  Header h;
  h.anchor_count = r.get<std::uint64_t>("anchor_count");
  h.feature_dim = r.get<std::uint32_t>("feature_dim");
  h.offsets_per_anchor = r.get<std::uint32_t>("offsets_per_anchor");
  for (int a = 0; a < 3; ++a) h.aabb.min[a] = r.get_f32("aabb.min");
  for (int a = 0; a < 3; ++a) h.aabb.max[a] = r.get_f32("aabb.max");
  h.voxel_size = r.get_f32("voxel_size");
  h.lambda = r.get_f32("lambda");
  h.digest = r.get<std::uint64_t>("digest");
  h.est_feat_coder = r.get<double>("est_feat_coder");
  h.est_feat_model = r.get<double>("est_feat_model");
  h.est_scof_coder = r.get<double>("est_scof_coder");
  h.est_scof_model = r.get<double>("est_scof_model");
  h.est_scaling_model = r.get<double>("est_scaling_model");
  h.est_offsets_model = r.get<double>("est_offsets_model");
  h.escape_count = r.get<std::uint64_t>("escape_count");
  for (std::size_t s = 0; s < kNumSections; ++s) {
    h.offsets[s] = r.get<std::uint64_t>("section offset");
    h.lengths[s] = r.get<std::uint64_t>("section length");
  }
  return h;
}

// Quantize one value; the symbol is the nearest integer multiple of step
// with a guard so |value - symbol*step| <= step/2 holds exactly in doubles.
std::int64_t quantize_value(double v, double s) {
  std::int64_t k = std::llround(v / s);
  double err = v - double(k) * s;
  if (err > 0.5 * s) ++k;
  else if (err < -0.5 * s) --k;
  return k;
}

struct ElementCoder {
  RangeEncoder enc;
  double model_bits = 0;
  std::uint64_t escapes = 0;

  void encode_element(double value, double mu, double sigma, double step,
                      std::int64_t* out_symbol, std::uint32_t anchor_id) {
    std::int64_t k = quantize_value(value, step);
    CodingAlphabet alpha = make_coding_alphabet(mu, sigma, step);
    if (alpha.in_window(k)) {
      enc.encode(k, alpha.cdf);
      double za = (double(k) * step - 0.5 * step - mu) / std::max(sigma, kSigmaFloor);
      double zb = (double(k) * step + 0.5 * step - mu) / std::max(sigma, kSigmaFloor);
      // The discretized cdf floors every in-window symbol at frequency 1, so
      // the effective model probability is never below 1/kTotal; estimate
      // with the same floor or rare edge-of-window symbols would make the
      // estimate overshoot the coded size.
      model_bits -= std::log2(
          std::max(gauss_interval_prob(za, zb), 1.0 / double(DiscretizedCdf::kTotal)));
    } else {
      if (k < INT32_MIN || k > INT32_MAX)
        throw Error("escape-symbol overflow at anchor " + std::to_string(anchor_id));
      enc.encode(alpha.escape_symbol(), alpha.cdf);
      std::uint32_t u = std::uint32_t(std::int32_t(k));
      for (int b = 0; b < 4; ++b) enc.encode_raw_byte(std::uint8_t(u >> (8 * b)));
      double p_esc =
          double(alpha.cdf.freq(alpha.escape_symbol())) / double(DiscretizedCdf::kTotal);
      model_bits += -std::log2(std::max(p_esc, 1e-12)) + 32.0;
      ++escapes;
    }
    *out_symbol = k;
  }
};

struct ElementDecoder {
  RangeDecoder dec;
  explicit ElementDecoder(std::span<const std::uint8_t> bytes) : dec(bytes) {}

  std::int64_t decode_element(double mu, double sigma, double step) {
    (void)sigma;
    CodingAlphabet alpha = make_coding_alphabet(mu, sigma, step);
    std::int64_t sym = dec.decode(alpha.cdf);
    if (sym != alpha.escape_symbol()) return sym;
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(dec.decode_raw_byte()) << (8 * b);
    return std::int64_t(std::int32_t(u));
  }
};

// Shared per-scene prediction state driving both encoder and decoder; any
// divergence here would break decodability, so everything below is a pure
// function of decoded data and the (f32-canonical) model.
struct SceneCtx {
  std::vector<QuantLocation> qlocs;       // per anchor index
  std::vector<Vec3> xbar;                 // decoded locations
  CodingOrder order;
  std::vector<std::vector<double>> agnostic;
  std::vector<std::array<double, 3>> norm_loc;
};

SceneCtx build_scene_ctx(std::span<const Vec3> locations, const Aabb& box,
                         double voxel_size, const AgnosticExtractor& extractor,
                         bool from_quantized, std::span<const QuantLocation> qlocs_in) {
  SceneCtx ctx;
  const std::size_t n = locations.size();
  ctx.qlocs.resize(n);
  ctx.xbar.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ctx.qlocs[i] = from_quantized ? qlocs_in[i] : quantize_location(locations[i], box);
    ctx.xbar[i] = dequantize_location(ctx.qlocs[i], box);
  }
  ctx.order = coding_order(ctx.qlocs, box, voxel_size, /*strict=*/true);
  if (n > 0) ctx.agnostic = extractor.features(ctx.xbar, voxel_size);
  ctx.norm_loc.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      double t = (ctx.xbar[i][a] - box.min[a]) / box.extent(a);
      ctx.norm_loc[i][a] = std::min(std::max(t, 0.0), 1.0);
    }
  return ctx;
}

std::vector<std::array<double, 3>> ctx_rels(const ContextSet& ctx) {
  std::vector<std::array<double, 3>> rel(ctx.neighbors.size());
  for (std::size_t j = 0; j < ctx.neighbors.size(); ++j) rel[j] = ctx.neighbors[j].rel;
  return rel;
}

}  // namespace

Bytes compress(const AnchorScene& scene, const HemgsModel& model_in, RateLambda lambda_in,
               const AgnosticExtractor& extractor, CodecTrace* trace) {
  scene.validate();
  // The header stores lambda as f32; predict with exactly the value the
  // decoder will see.
  RateLambda lambda(double(float(lambda_in.value)));
  if (model_in.config().feature_dim != scene.feature_dim ||
      model_in.config().offsets_per_anchor != scene.offsets_per_anchor)
    throw InvariantError("model attribute widths do not match scene");
  if (extractor.out_dim() != model_in.config().agnostic_dim)
    throw InvariantError("extractor width does not match model config");

  // Round-trip the parameters through their f32 serialization: the decoder
  // only ever sees that form, and predictions must match it bit-exactly.
  Bytes side = model_in.serialize();
  HemgsModel model = HemgsModel::deserialize(side);

  const std::size_t n = scene.size();
  std::vector<Vec3> locations(n);
  for (std::size_t i = 0; i < n; ++i) locations[i] = scene.anchors[i].location;
  SceneCtx sc = build_scene_ctx(locations, scene.aabb, scene.voxel_size, extractor,
                                false, {});
  ContextIndex index(sc.order);

  const std::size_t D1 = scene.feature_dim;
  const std::size_t D2 = scene.scof_dim();
  const std::uint32_t rf = model.config().rf_extent;
  const std::uint32_t nmax = model.config().max_context;

  ElementCoder feat_coder, scof_coder;
  double est_scaling_model = 0, est_offsets_model = 0;
  std::vector<std::vector<double>> dec_feature(n), dec_scof(n);

  for (std::size_t r = 0; r < n; ++r) {
    const std::uint32_t a = sc.order.perm[r];
    const Anchor& an = scene.anchors[a];
    ContextSet ctx = select_context(index, a, rf, nmax);
    auto rel = ctx_rels(ctx);
    std::vector<double> grid_feat = model.grid().query(sc.norm_loc[a]);

    // Stage 1: local feature, conditioned on decoded locations.
    std::vector<std::vector<double>> nb_feat(ctx.neighbors.size());
    for (std::size_t j = 0; j < ctx.neighbors.size(); ++j)
      nb_feat[j] = dec_feature[ctx.neighbors[j].anchor];
    StageResult st1 = model.predict_stage(sc.agnostic[a], grid_feat, {}, lambda, rel,
                                          nb_feat, Stage::Feature);
    std::vector<double>& df = dec_feature[a];
    df.resize(D1);
    for (std::size_t i = 0; i < D1; ++i) {
      std::int64_t k;
      feat_coder.encode_element(an.feature[i], st1.params.mu[i], st1.params.sigma[i],
                                st1.step[i], &k, a);
      df[i] = double(k) * st1.step[i];
      if (trace) {
        trace->step.push_back(st1.step[i]);
        trace->original.push_back(an.feature[i]);
        trace->dequantized.push_back(df[i]);
      }
    }

    // Stage 2: scaling+offsets, additionally conditioned on the decoded
    // local feature.
    std::vector<std::vector<double>> nb_scof(ctx.neighbors.size());
    for (std::size_t j = 0; j < ctx.neighbors.size(); ++j)
      nb_scof[j] = dec_scof[ctx.neighbors[j].anchor];
    StageResult st2 = model.predict_stage(sc.agnostic[a], grid_feat, df, lambda, rel,
                                          nb_scof, Stage::ScalingOffsets);
    std::vector<double>& ds = dec_scof[a];
    ds.resize(D2);
    for (std::size_t i = 0; i < D2; ++i) {
      double v = i < 6 ? an.scaling[i] : an.offsets[i - 6];
      double before = scof_coder.model_bits;
      std::int64_t k;
      scof_coder.encode_element(v, st2.params.mu[i], st2.params.sigma[i], st2.step[i],
                                &k, a);
      ds[i] = double(k) * st2.step[i];
      if (trace) {
        trace->step.push_back(st2.step[i]);
        trace->original.push_back(v);
        trace->dequantized.push_back(ds[i]);
      }
      (i < 6 ? est_scaling_model : est_offsets_model) += scof_coder.model_bits - before;
    }
  }

  Header h;
  h.anchor_count = n;
  h.feature_dim = scene.feature_dim;
  h.offsets_per_anchor = scene.offsets_per_anchor;
  h.aabb = scene.aabb;
  h.voxel_size = scene.voxel_size;
  h.lambda = lambda.value;
  h.digest = fnv1a64(side.data(), side.size());
  h.est_feat_coder = feat_coder.enc.coded_bits();
  h.est_feat_model = feat_coder.model_bits;
  h.est_scof_coder = scof_coder.enc.coded_bits();
  h.est_scof_model = scof_coder.model_bits;
  h.est_scaling_model = est_scaling_model;
  h.est_offsets_model = est_offsets_model;
  h.escape_count = feat_coder.escapes + scof_coder.escapes;

  Bytes loc;
  loc.reserve(6 * n);
  for (std::size_t r = 0; r < n; ++r) {
    const QuantLocation& q = sc.qlocs[sc.order.perm[r]];
    for (int axis = 0; axis < 3; ++axis) {
      loc.push_back(std::uint8_t(q.q[axis] & 0xff));
      loc.push_back(std::uint8_t(q.q[axis] >> 8));
    }
  }
  Bytes feat = n > 0 ? feat_coder.enc.finish() : Bytes{};
  Bytes scof = n > 0 ? scof_coder.enc.finish() : Bytes{};

  // Lay out: header | (section + crc32)*4
  Writer w;
  write_header(w, h);  // placeholder offsets; rewritten below
  const std::size_t header_size = w.out.size();
  std::array<Bytes*, kNumSections> sections{&loc, &feat, &scof, &side};
  std::size_t at = header_size;
  for (std::size_t s = 0; s < kNumSections; ++s) {
    h.offsets[s] = at;
    h.lengths[s] = sections[s]->size();
    at += sections[s]->size() + 4;
  }
  Writer w2;
  write_header(w2, h);
  for (std::size_t s = 0; s < kNumSections; ++s) {
    w2.put_bytes(*sections[s]);
    w2.put(crc32(*sections[s]));
  }
  return std::move(w2.out);
}

namespace {

Bytes section_bytes(const Bytes& bits, const Header& h, std::size_t s,
                    const char* name) {
  if (h.offsets[s] + h.lengths[s] + 4 > bits.size())
    throw DecodeError(std::string("section table exceeds stream size for ") + name);
  Bytes b(bits.begin() + h.offsets[s], bits.begin() + h.offsets[s] + h.lengths[s]);
  std::uint32_t stored;
  std::memcpy(&stored, bits.data() + h.offsets[s] + h.lengths[s], 4);
  if (crc32(b) != stored)
    throw ChecksumError(std::string("checksum mismatch in section ") + name);
  return b;
}

}  // namespace

AnchorScene decompress(const Bytes& bits, const AgnosticExtractor& extractor) {
  Reader r(bits);
  Header h = read_header(r);
  Bytes loc = section_bytes(bits, h, 0, "LOC");
  Bytes feat = section_bytes(bits, h, 1, "FEAT");
  Bytes scof = section_bytes(bits, h, 2, "SCOF");
  Bytes side = section_bytes(bits, h, 3, "SIDE");
  if (fnv1a64(side.data(), side.size()) != h.digest)
    throw DigestError("model digest mismatch between header and SIDE section");

  HemgsModel model = HemgsModel::deserialize(side);
  if (model.config().feature_dim != h.feature_dim ||
      model.config().offsets_per_anchor != h.offsets_per_anchor)
    throw DecodeError("model attribute widths do not match stream header");
  if (extractor.out_dim() != model.config().agnostic_dim)
    throw InvariantError("extractor width does not match model config");
  RateLambda lambda(h.lambda);

  const std::size_t n = h.anchor_count;
  if (loc.size() != 6 * n) throw DecodeError("LOC section length mismatch");
  std::vector<QuantLocation> qlocs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int axis = 0; axis < 3; ++axis)
      qlocs[i].q[axis] =
          std::uint16_t(loc[6 * i + 2 * axis]) | (std::uint16_t(loc[6 * i + 2 * axis + 1]) << 8);

  AnchorScene scene;
  scene.aabb = h.aabb;
  scene.voxel_size = h.voxel_size;
  scene.feature_dim = h.feature_dim;
  scene.offsets_per_anchor = h.offsets_per_anchor;
  scene.anchors.resize(n);
  if (n == 0) return scene;

  std::vector<Vec3> locations(n);
  SceneCtx sc = build_scene_ctx(locations, h.aabb, h.voxel_size, extractor, true, qlocs);
  ContextIndex index(sc.order);

  const std::size_t D1 = h.feature_dim;
  const std::size_t D2 = 6 + 3 * std::size_t(h.offsets_per_anchor);
  const std::uint32_t rf = model.config().rf_extent;
  const std::uint32_t nmax = model.config().max_context;

  ElementDecoder feat_dec(feat), scof_dec(scof);
  std::vector<std::vector<double>> dec_feature(n), dec_scof(n);

  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::uint32_t a = sc.order.perm[rank];
    ContextSet ctx = select_context(index, a, rf, nmax);
    auto rel = ctx_rels(ctx);
    std::vector<double> grid_feat = model.grid().query(sc.norm_loc[a]);

    std::vector<std::vector<double>> nb_feat(ctx.neighbors.size());
    for (std::size_t j = 0; j < ctx.neighbors.size(); ++j)
      nb_feat[j] = dec_feature[ctx.neighbors[j].anchor];
    StageResult st1 = model.predict_stage(sc.agnostic[a], grid_feat, {}, lambda, rel,
                                          nb_feat, Stage::Feature);
    std::vector<double>& df = dec_feature[a];
    df.resize(D1);
    for (std::size_t i = 0; i < D1; ++i) {
      std::int64_t k = feat_dec.decode_element(st1.params.mu[i], st1.params.sigma[i],
                                               st1.step[i]);
      df[i] = double(k) * st1.step[i];
    }

    std::vector<std::vector<double>> nb_scof(ctx.neighbors.size());
    for (std::size_t j = 0; j < ctx.neighbors.size(); ++j)
      nb_scof[j] = dec_scof[ctx.neighbors[j].anchor];
    StageResult st2 = model.predict_stage(sc.agnostic[a], grid_feat, df, lambda, rel,
                                          nb_scof, Stage::ScalingOffsets);
    std::vector<double>& ds = dec_scof[a];
    ds.resize(D2);
    for (std::size_t i = 0; i < D2; ++i) {
      std::int64_t k = scof_dec.decode_element(st2.params.mu[i], st2.params.sigma[i],
                                               st2.step[i]);
      ds[i] = double(k) * st2.step[i];
    }
  }

  // Emit anchors in coding order with dequantized values.
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::uint32_t a = sc.order.perm[rank];
    Anchor& an = scene.anchors[rank];
    an.location = sc.xbar[a];
    an.feature = std::move(dec_feature[a]);
    an.scaling.assign(dec_scof[a].begin(), dec_scof[a].begin() + 6);
    an.offsets.assign(dec_scof[a].begin() + 6, dec_scof[a].end());
  }
  return scene;
}

StorageReport inspect(const Bytes& bits) {
  Reader r(bits);
  Header h = read_header(r);
  StorageReport rep;
  rep.anchor_count = h.anchor_count;
  rep.lambda = h.lambda;
  rep.location_bytes = h.lengths[0];
  rep.feature_bytes = h.lengths[1];
  double scof_total = double(h.lengths[2]);
  double split = h.est_scaling_model + h.est_offsets_model;
  double scaling_frac = split > 0 ? h.est_scaling_model / split : 0.5;
  rep.scaling_bytes = scof_total * scaling_frac;
  rep.offsets_bytes = scof_total - rep.scaling_bytes;
  rep.side_bytes = h.lengths[3];
  std::uint64_t sections = h.lengths[0] + h.lengths[1] + h.lengths[2] + h.lengths[3];
  if (bits.size() < sections) throw DecodeError("malformed section table");
  rep.total_bytes = bits.size();
  rep.overhead_bytes = bits.size() - sections;  // header + table + checksums
  rep.bits_per_anchor =
      h.anchor_count ? double(bits.size()) * 8.0 / double(h.anchor_count) : 0.0;
  rep.est_feat_coder_bits = h.est_feat_coder;
  rep.est_feat_model_bits = h.est_feat_model;
  rep.est_scof_coder_bits = h.est_scof_coder;
  rep.est_scof_model_bits = h.est_scof_model;
  rep.escape_count = h.escape_count;
  return rep;
}

}  // namespace hemgs
