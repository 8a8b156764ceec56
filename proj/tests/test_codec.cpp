#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hemgs/codec.hpp"

using namespace hemgs;

namespace {

struct Fixture {
  AnchorScene scene;
  ModelConfig cfg;
  AgnosticExtractor ext = AgnosticExtractor::generate(8, 16, 16, 77);

  explicit Fixture(std::size_t n, std::uint64_t seed = 1,
                   SpatialPattern pattern = SpatialPattern::Clustered) {
    SynthSpec spec;
    spec.anchor_count = n;
    spec.seed = seed;
    spec.pattern = pattern;
    spec.attributes = AttributeModel::SpatiallyCorrelated;
    spec.feature_dim = 8;
    spec.offsets_per_anchor = 2;
    scene = synth_scene(spec);
    cfg.feature_dim = 8;
    cfg.offsets_per_anchor = 2;
    cfg.hidden = 16;
    cfg.prior_dim = 16;
    cfg.ctx_dim = 16;
    cfg.agnostic_dim = 16;
    cfg.grid.levels = 2;
    cfg.grid.base_resolution = 4;
    cfg.grid.max_resolution = 16;
    cfg.grid.table_size = 1u << 8;
  }
};

// The decoder's view of the original scene: quantized locations, attributes
// rounded by the steps actually used at encode time (read from the trace).
void check_round_trip(const AnchorScene& orig, const AnchorScene& dec,
                      const CodecTrace& trace) {
  REQUIRE(dec.size() == orig.size());
  // Pair up decoded anchors (emitted in coding order) with originals.
  std::vector<QuantLocation> qlocs(orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i)
    qlocs[i] = quantize_location(orig.anchors[i].location, orig.aabb);
  CodingOrder order = coding_order(qlocs, orig.aabb, orig.voxel_size);
  std::size_t t = 0;
  for (std::size_t rank = 0; rank < orig.size(); ++rank) {
    const Anchor& a = orig.anchors[order.perm[rank]];
    const Anchor& b = dec.anchors[rank];
    Vec3 want = dequantize_location(qlocs[order.perm[rank]], orig.aabb);
    CHECK(b.location == want);
    for (std::size_t i = 0; i < a.feature.size(); ++i, ++t) {
      CHECK(trace.original[t] == a.feature[i]);
      CHECK(b.feature[i] == trace.dequantized[t]);
    }
    for (std::size_t i = 0; i < 6; ++i, ++t) CHECK(b.scaling[i] == trace.dequantized[t]);
    for (std::size_t i = 0; i < a.offsets.size(); ++i, ++t)
      CHECK(b.offsets[i] == trace.dequantized[t]);
  }
  CHECK(t == trace.dequantized.size());
}

}  // namespace

TEST_CASE("empty scene round trips through the container") {
  AnchorScene scene;
  scene.aabb = {{0, 0, 0}, {2, 2, 2}};
  scene.voxel_size = 0.25;
  scene.feature_dim = 8;
  scene.offsets_per_anchor = 2;
  ModelConfig cfg;
  cfg.feature_dim = 8;
  cfg.offsets_per_anchor = 2;
  cfg.hidden = 16;
  cfg.prior_dim = 16;
  cfg.ctx_dim = 16;
  cfg.agnostic_dim = 16;
  HemgsModel model(cfg);
  AgnosticExtractor ext = AgnosticExtractor::generate(8, 16, 16, 77);
  Bytes bits = compress(scene, model, RateLambda(1e-3), ext);
  AnchorScene dec = decompress(bits, ext);
  CHECK(dec.size() == 0);
  CHECK(dec.aabb.min == scene.aabb.min);
  StorageReport rep = inspect(bits);
  CHECK(rep.anchor_count == 0);
  CHECK(rep.location_bytes == 0);
}

TEST_CASE("1000-anchor round trip reproduces the quantized scene bit-exactly") {
  Fixture f(1000);
  HemgsModel model(f.cfg);
  CodecTrace trace;
  Bytes bits = compress(f.scene, model, RateLambda(2e-3), f.ext, &trace);
  AnchorScene dec = decompress(bits, f.ext);
  check_round_trip(f.scene, dec, trace);
  dec.validate();
}

TEST_CASE("quantization contract: |original - dequantized| <= step/2") {
  Fixture f(400, 3, SpatialPattern::Planar);
  HemgsModel model(f.cfg);
  CodecTrace trace;
  compress(f.scene, model, RateLambda(1e-3), f.ext, &trace);
  REQUIRE(!trace.step.empty());
  for (std::size_t i = 0; i < trace.step.size(); ++i)
    CHECK(std::abs(trace.original[i] - trace.dequantized[i]) <= 0.5 * trace.step[i]);
}

TEST_CASE("compress is deterministic: identical bytes across calls") {
  Fixture f(300, 9);
  HemgsModel model(f.cfg);
  CHECK(compress(f.scene, model, RateLambda(4e-3), f.ext) ==
        compress(f.scene, model, RateLambda(4e-3), f.ext));
}

TEST_CASE("codec is idempotent on already-quantized scenes") {
  Fixture f(250, 12);
  HemgsModel model(f.cfg);
  Bytes bits1 = compress(f.scene, model, RateLambda(2e-3), f.ext);
  AnchorScene dec1 = decompress(bits1, f.ext);
  Bytes bits2 = compress(dec1, model, RateLambda(2e-3), f.ext);
  CHECK(bits1 == bits2);
  CHECK(scenes_equal(decompress(bits2, f.ext), dec1));
}

TEST_CASE("inspect: LOC bytes, section accounting, and lambda") {
  Fixture f(321, 5);
  HemgsModel model(f.cfg);
  Bytes bits = compress(f.scene, model, RateLambda(3e-3), f.ext);
  StorageReport rep = inspect(bits);
  CHECK(rep.anchor_count == 321);
  CHECK(rep.location_bytes == 6 * 321);
  CHECK(rep.lambda == doctest::Approx(3e-3));
  // Sections + header/table/checksum overhead account for every byte.
  double sections = double(rep.location_bytes) + double(rep.feature_bytes) +
                    rep.scaling_bytes + rep.offsets_bytes + double(rep.side_bytes);
  CHECK(sections + double(rep.overhead_bytes) == doctest::Approx(double(rep.total_bytes)));
  CHECK(rep.total_bytes == bits.size());
  CHECK(rep.bits_per_anchor ==
        doctest::Approx(double(bits.size()) * 8.0 / double(rep.anchor_count)));
}

TEST_CASE("rate estimates track the actual entropy-coded section sizes") {
  Fixture f(800, 21);
  HemgsModel model(f.cfg);
  Bytes bits = compress(f.scene, model, RateLambda(1e-3), f.ext);
  StorageReport rep = inspect(bits);
  double feat_actual = double(rep.feature_bytes) * 8.0;
  double scof_actual = (rep.scaling_bytes + rep.offsets_bytes) * 8.0;
  CHECK(feat_actual <= rep.est_feat_model_bits * 1.005 + 64.0);
  CHECK(feat_actual >= rep.est_feat_model_bits * 0.995);
  CHECK(scof_actual <= rep.est_scof_model_bits * 1.005 + 64.0);
  CHECK(scof_actual >= rep.est_scof_model_bits * 0.995);
  // Coder-side tally sits between the model estimate and the actual bytes.
  CHECK(rep.est_feat_coder_bits <= feat_actual);
  CHECK(rep.est_scof_coder_bits <= scof_actual);
}

TEST_CASE("fault injection: each corruption raises its distinct error") {
  Fixture f(200, 33);
  HemgsModel model(f.cfg);
  Bytes bits = compress(f.scene, model, RateLambda(2e-3), f.ext);
  StorageReport rep = inspect(bits);

  SUBCASE("corrupt FEAT payload -> checksum error") {
    Bytes bad = bits;
    // FEAT starts after header and LOC+crc; flip a byte inside it.
    std::size_t feat_off = bad.size() - 4 - rep.side_bytes - 4 -
                           std::size_t(rep.scaling_bytes + rep.offsets_bytes + 0.5) - 4 -
                           rep.feature_bytes;
    bad[feat_off + rep.feature_bytes / 2] ^= 0x5a;
    CHECK_THROWS_AS(decompress(bad, f.ext), ChecksumError);
  }
  SUBCASE("corrupt SIDE digest -> digest error") {
    Bytes bad = bits;
    // The digest lives in the header; flipping it leaves section crcs intact.
    // Header layout: magic(4) version(1) count(8) dims(8) aabb(24) voxel(4)
    // lambda(4) digest(8).
    std::size_t digest_off = 4 + 1 + 8 + 8 + 24 + 4 + 4;
    bad[digest_off] ^= 0xff;
    CHECK_THROWS_AS(decompress(bad, f.ext), DigestError);
  }
  SUBCASE("truncated stream -> decode error") {
    Bytes bad(bits.begin(), bits.begin() + bits.size() / 3);
    CHECK_THROWS_AS(decompress(bad, f.ext), DecodeError);
  }
  SUBCASE("bad magic -> decode error") {
    Bytes bad = bits;
    bad[0] = 'X';
    CHECK_THROWS_AS(decompress(bad, f.ext), DecodeError);
  }
  SUBCASE("no partial scene on corruption") {
    Bytes bad = bits;
    bad[bad.size() - rep.side_bytes / 2] ^= 0x1;
    CHECK_THROWS_AS(decompress(bad, f.ext), DecodeError);
  }
}

TEST_CASE("streams at different lambdas share the model but differ in size") {
  Fixture f(500, 44);
  HemgsModel model(f.cfg);
  Bytes lo = compress(f.scene, model, RateLambda(1e-3), f.ext);
  Bytes hi = compress(f.scene, model, RateLambda(4e-3), f.ext);
  StorageReport rl = inspect(lo), rh = inspect(hi);
  CHECK(rl.side_bytes == rh.side_bytes);
  CHECK(rl.lambda != rh.lambda);
  // Both decode losslessly regardless of lambda.
  CHECK(decompress(lo, f.ext).size() == 500);
  CHECK(decompress(hi, f.ext).size() == 500);
}

TEST_CASE("mismatched model/scene widths are rejected up front") {
  Fixture f(50, 2);
  ModelConfig wrong = f.cfg;
  wrong.feature_dim = 12;
  HemgsModel model(wrong);
  CHECK_THROWS_AS(compress(f.scene, model, RateLambda(1e-3), f.ext), InvariantError);
}

TEST_CASE("decompress with the wrong extractor width is rejected") {
  Fixture f(60, 8);
  HemgsModel model(f.cfg);
  Bytes bits = compress(f.scene, model, RateLambda(1e-3), f.ext);
  AgnosticExtractor narrow = AgnosticExtractor::generate(8, 16, 8, 5);
  CHECK_THROWS_AS(decompress(bits, narrow), InvariantError);
}
