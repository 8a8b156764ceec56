#include <benchmark/benchmark.h>

#include "hemgs/codec.hpp"

using namespace hemgs;

namespace {

AnchorScene bench_scene(std::size_t n) {
  SynthSpec spec;
  spec.anchor_count = n;
  spec.seed = 99;
  spec.pattern = SpatialPattern::Clustered;
  spec.attributes = AttributeModel::SpatiallyCorrelated;
  spec.feature_dim = 8;
  spec.offsets_per_anchor = 2;
  spec.grid = 48;
  return synth_scene(spec);
}

ModelConfig bench_model_config() {
  ModelConfig cfg;
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
  return cfg;
}

void BM_RangeCoder(benchmark::State& state) {
  std::vector<double> freq(64);
  for (std::size_t i = 0; i < freq.size(); ++i) freq[i] = 1.0 / double(i + 1);
  DiscretizedCdf cdf = build_cdf(freq);
  std::vector<std::uint32_t> symbols(std::size_t(state.range(0)));
  std::uint64_t h = 3;
  for (auto& s : symbols) s = std::uint32_t((h = splitmix64(h)) % freq.size());
  for (auto _ : state) {
    RangeEncoder enc;
    for (auto s : symbols) enc.encode(s, cdf);
    Bytes bits = enc.finish();
    benchmark::DoNotOptimize(bits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RangeCoder)->Arg(1 << 14);

void BM_HashGridQuery(benchmark::State& state) {
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.base_resolution = 8;
  cfg.max_resolution = 128;
  cfg.table_size = 1u << 14;
  HashGrid grid(cfg);
  grid.init_random(5);
  std::uint64_t h = 11;
  std::array<double, 3> p{0.1, 0.2, 0.3};
  for (auto _ : state) {
    for (int a = 0; a < 3; ++a) p[a] = u01(h = splitmix64(h));
    std::vector<double> f = grid.query(p);
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HashGridQuery);

void BM_SelectContext(benchmark::State& state) {
  AnchorScene scene = bench_scene(std::size_t(state.range(0)));
  std::vector<QuantLocation> qlocs(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i)
    qlocs[i] = quantize_location(scene.anchors[i].location, scene.aabb);
  CodingOrder order = coding_order(qlocs, scene.aabb, scene.voxel_size);
  ContextIndex index(order);
  std::uint32_t a = 0;
  for (auto _ : state) {
    ContextSet ctx = select_context(index, a);
    benchmark::DoNotOptimize(ctx.neighbors.data());
    a = (a + 1) % std::uint32_t(scene.size());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SelectContext)->Arg(10000);

void BM_MlpForward(benchmark::State& state) {
  const std::size_t widths[] = {48, 64, 64, 16};
  const Activation acts[] = {Activation::Relu, Activation::Relu, Activation::None};
  Mlp net = Mlp::make(widths, acts);
  net.init_random(7);
  std::vector<double> x(48, 0.25);
  for (auto _ : state) {
    std::vector<double> y = net.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MlpForward);

void BM_Encode(benchmark::State& state) {
  AnchorScene scene = bench_scene(std::size_t(state.range(0)));
  HemgsModel model(bench_model_config());
  AgnosticExtractor ext = AgnosticExtractor::generate(8, 16, 16, 2024);
  for (auto _ : state) {
    Bytes bits = compress(scene, model, RateLambda(2e-3), ext);
    benchmark::DoNotOptimize(bits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Decode(benchmark::State& state) {
  AnchorScene scene = bench_scene(std::size_t(state.range(0)));
  HemgsModel model(bench_model_config());
  AgnosticExtractor ext = AgnosticExtractor::generate(8, 16, 16, 2024);
  Bytes bits = compress(scene, model, RateLambda(2e-3), ext);
  for (auto _ : state) {
    AnchorScene dec = decompress(bits, ext);
    benchmark::DoNotOptimize(dec.anchors.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Decode)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
