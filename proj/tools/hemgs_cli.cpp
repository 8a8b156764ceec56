// hemgs command-line tool: compress / decompress / train / inspect / stats /
// synth / bench. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 internal invariant violation. Every printed number equals the
// corresponding library-call result; --machine switches to key=value lines.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hemgs/trainer.hpp"

namespace {

using namespace hemgs;

Bytes read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return Bytes(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write: " + path);
  os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!os) throw IoError("short write: " + path);
}

SceneFormat format_of(bool ascii) {
  return ascii ? SceneFormat::AsciiTable : SceneFormat::NativeBinary;
}

AgnosticExtractor load_extractor(const std::string& explicit_path) {
  if (!explicit_path.empty()) return AgnosticExtractor::load(explicit_path);
  if (const char* dir = std::getenv("HEMGS_ASSET_DIR")) {
    std::filesystem::path p = std::filesystem::path(dir) / "extractor.a3pn";
    if (std::filesystem::exists(p)) return AgnosticExtractor::load(p.string());
  }
  return AgnosticExtractor::generate_default();
}

struct Printer {
  bool machine = false;
  void kv(const std::string& key, const std::string& value,
          const std::string& pretty = "") {
    if (machine)
      std::cout << key << "=" << value << "\n";
    else
      std::cout << (pretty.empty() ? key : pretty) << ": " << value << "\n";
  }
  template <typename T>
  void kv(const std::string& key, T value, const std::string& pretty = "") {
    std::ostringstream os;
    os.precision(17);
    os << value;
    kv(key, os.str(), pretty);
  }
};

void print_report(Printer& p, const StorageReport& r) {
  p.kv("anchors", r.anchor_count, "Anchors");
  p.kv("lambda", r.lambda, "Lambda");
  p.kv("location_bytes", r.location_bytes, "Location");
  p.kv("feature_bytes", r.feature_bytes, "Feature");
  p.kv("scaling_bytes", r.scaling_bytes, "Scaling (est.)");
  p.kv("offsets_bytes", r.offsets_bytes, "Offsets (est.)");
  p.kv("others_bytes", r.others_bytes(), "Others");
  p.kv("total_bytes", r.total_bytes, "Total");
  p.kv("bits_per_anchor", r.bits_per_anchor, "Bits/anchor");
  p.kv("est_feat_model_bits", r.est_feat_model_bits, "Feature model bits (est.)");
  p.kv("est_scof_model_bits", r.est_scof_model_bits, "Scaling+offsets model bits (est.)");
  p.kv("escape_count", r.escape_count, "Escape symbols");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"hemgs: anchor-scene codec with a learned hierarchical entropy model"};
  app.require_subcommand(0, 1);
  bool machine = false, show_config = false;
  app.add_flag("--machine", machine, "machine-readable key=value output");
  app.add_flag("--show-config", show_config, "print effective defaults and exit");

  // ---- compress ----
  auto* c = app.add_subcommand("compress", "compress a scene to a bitstream");
  std::string c_in, c_out, c_model, c_extractor;
  double c_lambda = 2e-3;
  bool c_ascii = false;
  c->add_option("--in", c_in, "input scene")->required();
  c->add_option("--out", c_out, "output bitstream")->required();
  c->add_option("--model", c_model, "trained model file")->required();
  c->add_option("--lambda", c_lambda, "rate point, in [1e-4, 1e-2]");
  c->add_option("--extractor", c_extractor, "scene-agnostic extractor asset");
  c->add_flag("--ascii", c_ascii, "input scene is the ASCII table format");

  // ---- decompress ----
  auto* d = app.add_subcommand("decompress", "decompress a bitstream to a scene");
  std::string d_in, d_out, d_extractor;
  bool d_ascii = false;
  d->add_option("--in", d_in, "input bitstream")->required();
  d->add_option("--out", d_out, "output scene")->required();
  d->add_option("--extractor", d_extractor, "scene-agnostic extractor asset");
  d->add_flag("--ascii", d_ascii, "write the ASCII table format");

  // ---- train ----
  auto* t = app.add_subcommand("train", "fit a scene-specific model");
  std::string t_in, t_out, t_extractor;
  bool t_ascii = false, t_no_sa = false, t_no_ar = false, t_avg = false;
  TrainConfig tcfg;
  std::uint32_t t_hidden = 64;
  t->add_option("--in", t_in, "input scene")->required();
  t->add_option("--out", t_out, "output model file")->required();
  t->add_option("--extractor", t_extractor, "scene-agnostic extractor asset");
  t->add_flag("--ascii", t_ascii, "input scene is the ASCII table format");
  t->add_option("--iterations", tcfg.iterations, "gradient steps");
  t->add_option("--batch", tcfg.batch, "anchors per step");
  t->add_option("--seed", tcfg.seed, "training seed");
  t->add_option("--lr-mlp", tcfg.lr_mlp, "MLP learning rate");
  t->add_option("--lr-grid", tcfg.lr_grid, "hash-grid learning rate");
  t->add_option("--lambda-grid", tcfg.lambda_grid, "rate points to condition on");
  t->add_option("--hidden", t_hidden, "MLP hidden width");
  t->add_flag("--average-lambdas", t_avg, "average the grid each step instead of cycling");
  t->add_flag("--no-sa", t_no_sa, "disable the scene-agnostic path");
  t->add_flag("--no-ar", t_no_ar, "disable the autoregressive context path");

  // ---- inspect ----
  auto* i = app.add_subcommand("inspect", "storage report of a bitstream");
  std::string i_in;
  i->add_option("bitstream", i_in, "bitstream file")->required();

  // ---- stats ----
  auto* s = app.add_subcommand("stats", "context statistics of a scene");
  std::string s_in;
  bool s_ascii = false;
  std::uint32_t s_rf = kDefaultReceptiveField, s_n = kDefaultMaxContext;
  s->add_option("scene", s_in, "scene file")->required();
  s->add_option("--rf", s_rf, "receptive field extent, voxels");
  s->add_option("--n", s_n, "max context size");
  s->add_flag("--ascii", s_ascii, "input scene is the ASCII table format");

  // ---- synth ----
  auto* y = app.add_subcommand("synth", "generate a deterministic synthetic scene");
  std::string y_out, y_pattern = "uniform", y_attr = "correlated";
  bool y_ascii = false;
  SynthSpec spec;
  y->add_option("--out", y_out, "output scene")->required();
  y->add_option("--n", spec.anchor_count, "anchor count")->required();
  y->add_option("--seed", spec.seed, "generator seed");
  y->add_option("--pattern", y_pattern, "uniform | clustered | planar");
  y->add_option("--attributes", y_attr, "iid | correlated");
  y->add_option("--grid", spec.grid, "voxel grid resolution per axis");
  y->add_option("--voxel", spec.voxel_size, "voxel edge length");
  y->add_option("--feature-dim", spec.feature_dim, "feature width");
  y->add_option("--offsets", spec.offsets_per_anchor, "offsets per anchor");
  y->add_option("--noise", spec.noise_level, "correlated-mode noise level");
  y->add_flag("--ascii", y_ascii, "write the ASCII table format");

  // ---- bench ----
  auto* b = app.add_subcommand("bench", "encode/decode throughput on a synthetic scene");
  std::size_t b_n = 50000;
  std::uint64_t b_seed = 1;
  b->add_option("--n", b_n, "anchor count");
  b->add_option("--seed", b_seed, "scene seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  Printer p{machine};
  if (show_config) {
    p.kv("lambda_grid", "1e-3,2e-3,3e-3,4e-3");
    p.kv("lambda_range", "[1e-4, 1e-2]");
    p.kv("rf", kDefaultReceptiveField);
    p.kv("n", kDefaultMaxContext);
    p.kv("iterations", TrainConfig{}.iterations);
    p.kv("batch", TrainConfig{}.batch);
    p.kv("lr_mlp", TrainConfig{}.lr_mlp);
    p.kv("lr_grid", TrainConfig{}.lr_grid);
    p.kv("base_step_feature", ModelConfig{}.s0_feature);
    p.kv("base_step_scof", ModelConfig{}.s0_scof);
    p.kv("hidden", ModelConfig{}.hidden);
    if (app.get_subcommands().empty()) return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 1;
  }

  if (c->parsed()) {
    AnchorScene scene = load_scene(c_in, format_of(c_ascii));
    HemgsModel model = HemgsModel::deserialize(read_file(c_model));
    AgnosticExtractor ext = load_extractor(c_extractor);
    Bytes bits = compress(scene, model, RateLambda(c_lambda), ext);
    write_file(c_out, bits);
    print_report(p, inspect(bits));
  } else if (d->parsed()) {
    AgnosticExtractor ext = load_extractor(d_extractor);
    AnchorScene scene = decompress(read_file(d_in), ext);
    save_scene(scene, d_out, format_of(d_ascii));
    p.kv("anchors", scene.size(), "Anchors");
  } else if (t->parsed()) {
    AnchorScene scene = load_scene(t_in, format_of(t_ascii));
    AgnosticExtractor ext = load_extractor(t_extractor);
    ModelConfig mcfg;
    mcfg.feature_dim = scene.feature_dim;
    mcfg.offsets_per_anchor = scene.offsets_per_anchor;
    mcfg.hidden = t_hidden;
    mcfg.sa_enabled = !t_no_sa;
    mcfg.ar_enabled = !t_no_ar;
    tcfg.average_lambdas = t_avg;
    Trainer trainer(scene, mcfg, tcfg, ext);
    TrainResult res = trainer.run();
    write_file(t_out, trainer.model().serialize());
    p.kv("iterations_run", res.iterations_run, "Iterations");
    p.kv("diverged", res.diverged ? 1 : 0, "Diverged");
    p.kv("first_total", res.first.total, "First-step loss");
    p.kv("last_total", res.last.total, "Last-step loss");
    p.kv("last_rate_bits", res.last.rate_bits, "Last-step rate (bits)");
    p.kv("last_distortion", res.last.distortion, "Last-step distortion");
  } else if (i->parsed()) {
    print_report(p, inspect(read_file(i_in)));
  } else if (s->parsed()) {
    AnchorScene scene = load_scene(s_in, format_of(s_ascii));
    std::vector<QuantLocation> q(scene.size());
    for (std::size_t k = 0; k < scene.size(); ++k)
      q[k] = quantize_location(scene.anchors[k].location, scene.aabb);
    CodingOrder order = coding_order(q, scene.aabb, scene.voxel_size);
    ContextIndex index(order);
    ContextStats st = context_stats(index, s_rf, s_n);
    p.kv("average_selected", st.average_selected, "Average selected");
    p.kv("max_selected", st.max_selected, "Max selected");
    p.kv("sparse_fraction", st.sparse_fraction, "Sparse fraction");
  } else if (y->parsed()) {
    if (y_pattern == "uniform") spec.pattern = SpatialPattern::Uniform;
    else if (y_pattern == "clustered") spec.pattern = SpatialPattern::Clustered;
    else if (y_pattern == "planar") spec.pattern = SpatialPattern::Planar;
    else throw CLI::ValidationError("--pattern", "unknown pattern: " + y_pattern);
    if (y_attr == "iid") spec.attributes = AttributeModel::IidGaussian;
    else if (y_attr == "correlated") spec.attributes = AttributeModel::SpatiallyCorrelated;
    else throw CLI::ValidationError("--attributes", "unknown attribute model: " + y_attr);
    AnchorScene scene = synth_scene(spec);
    save_scene(scene, y_out, format_of(y_ascii));
    p.kv("anchors", scene.size(), "Anchors");
  } else if (b->parsed()) {
    SynthSpec bs;
    bs.anchor_count = b_n;
    bs.seed = b_seed;
    bs.pattern = SpatialPattern::Clustered;
    bs.attributes = AttributeModel::SpatiallyCorrelated;
    AnchorScene scene = synth_scene(bs);
    AgnosticExtractor ext = AgnosticExtractor::generate_default();
    ModelConfig mcfg;
    mcfg.feature_dim = scene.feature_dim;
    mcfg.offsets_per_anchor = scene.offsets_per_anchor;
    HemgsModel model(mcfg);
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    Bytes bits = compress(scene, model, RateLambda(2e-3), ext);
    auto t1 = clock::now();
    AnchorScene dec = decompress(bits, ext);
    auto t2 = clock::now();
    double enc_s = std::chrono::duration<double>(t1 - t0).count();
    double dec_s = std::chrono::duration<double>(t2 - t1).count();
    p.kv("anchors", scene.size(), "Anchors");
    p.kv("encode_seconds", enc_s, "Encode (s)");
    p.kv("decode_seconds", dec_s, "Decode (s)");
    p.kv("encode_anchors_per_second", double(scene.size()) / enc_s, "Encode anchors/s");
    p.kv("decode_anchors_per_second", double(scene.size()) / dec_s, "Decode anchors/s");
    p.kv("total_bytes", bits.size(), "Total bytes");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const CLI::Error&) {
    return 1;
  } catch (const hemgs::InvariantError& e) {
    std::cerr << "invariant-error: " << e.what() << "\n";
    return 3;
  } catch (const hemgs::Error& e) {
    std::cerr << "data-error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal-error: " << e.what() << "\n";
    return 3;
  }
}
