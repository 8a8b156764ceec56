#include "hemgs/model.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

namespace hemgs {

using json = nlohmann::json;

double RateLambda::normalized() const {
  double lo = std::log10(kLambdaMin), hi = std::log10(kLambdaMax);
  return 2.0 * (std::log10(value) - lo) / (hi - lo) - 1.0;
}

namespace {

constexpr double kLn2 = 0.6931471805599453;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

std::vector<double> concat3(std::span<const double> a, std::span<const double> b,
                            std::span<const double> c) {
  std::vector<double> out;
  out.reserve(a.size() + b.size() + c.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace

struct StageCache {
  Mlp::Cache hyper, vrp, ctx_head, head;
  std::vector<Mlp::Cache> phi;
  std::vector<std::vector<double>> phi_out;
  std::vector<std::size_t> max_src;  // argmax neighbor per context channel
  std::vector<double> step_mult;     // vrp output (before s0 scaling)
  std::vector<double> raw;           // head output
  bool has_ctx = false;
  std::size_t n_neighbors = 0;
};

StageCache* new_stage_cache() { return new StageCache(); }
void free_stage_cache(StageCache* p) { delete p; }

HemgsModel::HemgsModel(const ModelConfig& cfg) : cfg_(cfg), grid_(cfg.grid) {
  const std::size_t Fa = cfg.agnostic_dim;
  const std::size_t G = grid_.out_dim();
  const std::size_t P = cfg.prior_dim;
  const std::size_t C = cfg.ctx_dim;
  const std::size_t H = cfg.hidden;
  const std::size_t D1 = cfg.feature_dim;
  const std::size_t D2 = cfg.scof_dim();

  auto mlp = [&](std::initializer_list<std::size_t> widths,
                 std::initializer_list<Activation> acts) {
    std::vector<std::size_t> w(widths);
    std::vector<Activation> a(acts);
    return Mlp::make(w, a);
  };
  using A = Activation;
  hyper1 = mlp({Fa + G, H, P}, {A::Relu, A::None});
  hyper2 = mlp({Fa + G + D1, H, P}, {A::Relu, A::None});
  vrp1 = mlp({2 * P, H, D1}, {A::Relu, A::ExpClamp});
  vrp2 = mlp({2 * P, H, D2}, {A::Relu, A::ExpClamp});
  phi1 = mlp({3 + D1, H, C}, {A::Relu, A::Relu});
  phi2 = mlp({3 + D2, H, C}, {A::Relu, A::Relu});
  ctx_head1 = mlp({2 * C, H, C}, {A::Relu, A::None});
  ctx_head2 = mlp({2 * C, H, C}, {A::Relu, A::None});
  head1 = mlp({P + C + D1, H, 2 * D1}, {A::Relu, A::None});
  head2 = mlp({P + C + D2, H, 2 * D2}, {A::Relu, A::None});
  init_params();
}

void HemgsModel::init_params() {
  std::uint64_t s = cfg_.init_seed;
  grid_.init_random(splitmix64(s ^ 0x10), 1e-2);
  hyper1.init_random(splitmix64(s ^ 0x11));
  hyper2.init_random(splitmix64(s ^ 0x12));
  // Zero-initialized final layers: steps start at the base step exactly and
  // distributions start at mu=0.
  vrp1.init_random(splitmix64(s ^ 0x13), /*zero_final=*/true);
  vrp2.init_random(splitmix64(s ^ 0x14), true);
  phi1.init_random(splitmix64(s ^ 0x15));
  phi2.init_random(splitmix64(s ^ 0x16));
  ctx_head1.init_random(splitmix64(s ^ 0x17), true);
  ctx_head2.init_random(splitmix64(s ^ 0x18), true);
  head1.init_random(splitmix64(s ^ 0x19), true);
  head2.init_random(splitmix64(s ^ 0x1a), true);
  // Initial sigma levels per stage (softplus-domain biases).
  auto& b1 = head1.layers.back().b;
  for (std::size_t i = cfg_.feature_dim; i < b1.size(); ++i) b1[i] = cfg_.sigma0_feature;
  auto& b2 = head2.layers.back().b;
  for (std::size_t i = cfg_.scof_dim(); i < b2.size(); ++i) b2[i] = cfg_.sigma0_scof;
}

std::vector<double> HemgsModel::hyperprior_feature(std::span<const double> agnostic_feat,
                                                   std::span<const double> grid_feat,
                                                   std::span<const double> decoded_feature,
                                                   Stage stage) const {
  const Mlp& net = stage == Stage::Feature ? hyper1 : hyper2;
  if (stage == Stage::Feature && !decoded_feature.empty())
    throw InvariantError("stage 1 hyperprior takes no decoded feature");
  if (stage == Stage::ScalingOffsets && decoded_feature.size() != cfg_.feature_dim)
    throw InvariantError("stage 2 hyperprior requires the decoded local feature");
  std::vector<double> zeros;
  std::span<const double> ag = agnostic_feat;
  if (!cfg_.sa_enabled) {
    zeros.assign(cfg_.agnostic_dim, 0.0);
    ag = zeros;
  }
  return net.forward(concat3(ag, grid_feat, decoded_feature));
}

QuantStep HemgsModel::predict_step(std::span<const double> prior, RateLambda lambda,
                                   Stage stage) const {
  const Mlp& net = stage == Stage::Feature ? vrp1 : vrp2;
  std::vector<double> lam(cfg_.prior_dim, lambda.normalized());
  std::vector<double> mult = net.forward(concat3(prior, lam, {}));
  const double s0 = cfg_.base_step(stage);
  QuantStep step(mult.size());
  for (std::size_t i = 0; i < mult.size(); ++i) step[i] = s0 * mult[i];
  return step;
}

std::vector<double> HemgsModel::context_feature(
    std::span<const std::array<double, 3>> rel,
    std::span<const std::vector<double>> attrs, Stage stage) const {
  if (rel.size() != attrs.size())
    throw InvariantError("context_feature: rel/attrs length mismatch");
  const std::size_t C = cfg_.ctx_dim;
  if (rel.empty() || !cfg_.ar_enabled) return std::vector<double>(C, 0.0);
  const Mlp& phi = stage == Stage::Feature ? phi1 : phi2;
  const Mlp& head = stage == Stage::Feature ? ctx_head1 : ctx_head2;
  const double rel_scale = 2.0 / double(cfg_.rf_extent > 1 ? cfg_.rf_extent - 1 : 1);
  std::vector<double> mean(C, 0.0), mx(C, -1e300);
  for (std::size_t j = 0; j < rel.size(); ++j) {
    if (attrs[j].size() != cfg_.attr_dim(stage))
      throw InvariantError("context_feature: neighbor attribute dim mismatch");
    std::vector<double> in(3 + attrs[j].size());
    for (int a = 0; a < 3; ++a) in[a] = rel[j][a] * rel_scale;
    std::copy(attrs[j].begin(), attrs[j].end(), in.begin() + 3);
    std::vector<double> f = phi.forward(in);
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] += f[c];
      mx[c] = std::max(mx[c], f[c]);
    }
  }
  for (double& v : mean) v /= double(rel.size());
  std::vector<double> pooled(2 * C);
  std::copy(mean.begin(), mean.end(), pooled.begin());
  std::copy(mx.begin(), mx.end(), pooled.begin() + C);
  return head.forward(pooled);
}

GaussianParams HemgsModel::predict_distribution(std::span<const double> prior,
                                                std::span<const double> ctx,
                                                std::span<const double> step,
                                                Stage stage) const {
  const Mlp& net = stage == Stage::Feature ? head1 : head2;
  const std::size_t D = cfg_.attr_dim(stage);
  if (step.size() != D) throw InvariantError("predict_distribution: step dim mismatch");
  const double s0 = cfg_.base_step(stage);
  std::vector<double> logstep(D);
  for (std::size_t i = 0; i < D; ++i) logstep[i] = std::log2(step[i] / s0);
  std::vector<double> raw = net.forward(concat3(prior, ctx, logstep));
  GaussianParams p;
  p.mu.assign(raw.begin(), raw.begin() + D);
  p.sigma.resize(D);
  for (std::size_t i = 0; i < D; ++i) p.sigma[i] = softplus(raw[D + i]) + kSigmaFloor;
  return p;
}

StageResult HemgsModel::predict_stage(std::span<const double> agnostic_feat,
                                      std::span<const double> grid_feat,
                                      std::span<const double> decoded_feature,
                                      RateLambda lambda,
                                      std::span<const std::array<double, 3>> ctx_rel,
                                      std::span<const std::vector<double>> ctx_attrs,
                                      Stage stage, StageCache* cache) const {
  const bool s1 = stage == Stage::Feature;
  const Mlp& hyper = s1 ? hyper1 : hyper2;
  const Mlp& vrp = s1 ? vrp1 : vrp2;
  const Mlp& phi = s1 ? phi1 : phi2;
  const Mlp& chead = s1 ? ctx_head1 : ctx_head2;
  const Mlp& head = s1 ? head1 : head2;
  const std::size_t D = cfg_.attr_dim(stage);
  const std::size_t C = cfg_.ctx_dim;
  const std::size_t P = cfg_.prior_dim;
  const double s0 = cfg_.base_step(stage);

  StageResult res;

  std::vector<double> zeros;
  std::span<const double> ag = agnostic_feat;
  if (!cfg_.sa_enabled) {
    zeros.assign(cfg_.agnostic_dim, 0.0);
    ag = zeros;
  }
  std::vector<double> hp_in = concat3(ag, grid_feat, s1 ? std::span<const double>{}
                                                        : decoded_feature);
  res.prior = hyper.forward(hp_in, cache ? &cache->hyper : nullptr);

  std::vector<double> lam(P, lambda.normalized());
  std::vector<double> vrp_in = concat3(res.prior, lam, {});
  std::vector<double> mult = vrp.forward(vrp_in, cache ? &cache->vrp : nullptr);
  res.step.resize(D);
  for (std::size_t i = 0; i < D; ++i) res.step[i] = s0 * mult[i];

  const std::size_t m = ctx_rel.size();
  const bool has_ctx = cfg_.ar_enabled && m > 0;
  if (cache) {
    cache->has_ctx = has_ctx;
    cache->n_neighbors = m;
    cache->step_mult = mult;
    cache->phi.clear();
    cache->phi_out.clear();
  }
  if (has_ctx) {
    const double rel_scale = 2.0 / double(cfg_.rf_extent > 1 ? cfg_.rf_extent - 1 : 1);
    std::vector<double> mean(C, 0.0), mx(C, -1e300);
    std::vector<std::size_t> max_src(C, 0);
    if (cache) cache->phi.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> in(3 + D);
      for (int a = 0; a < 3; ++a) in[a] = ctx_rel[j][a] * rel_scale;
      if (ctx_attrs[j].size() != D)
        throw InvariantError("predict_stage: neighbor attribute dim mismatch");
      std::copy(ctx_attrs[j].begin(), ctx_attrs[j].end(), in.begin() + 3);
      std::vector<double> f = phi.forward(in, cache ? &cache->phi[j] : nullptr);
      for (std::size_t c = 0; c < C; ++c) {
        mean[c] += f[c];
        if (f[c] > mx[c]) {
          mx[c] = f[c];
          max_src[c] = j;
        }
      }
      if (cache) cache->phi_out.push_back(std::move(f));
    }
    for (double& v : mean) v /= double(m);
    std::vector<double> pooled(2 * C);
    std::copy(mean.begin(), mean.end(), pooled.begin());
    std::copy(mx.begin(), mx.end(), pooled.begin() + C);
    res.ctx = chead.forward(pooled, cache ? &cache->ctx_head : nullptr);
    if (cache) cache->max_src = std::move(max_src);
  } else {
    res.ctx.assign(C, 0.0);
  }

  std::vector<double> logstep(D);
  for (std::size_t i = 0; i < D; ++i) logstep[i] = std::log2(mult[i]);
  std::vector<double> head_in = concat3(res.prior, res.ctx, logstep);
  std::vector<double> raw = head.forward(head_in, cache ? &cache->head : nullptr);
  if (cache) cache->raw = raw;
  res.params.mu.assign(raw.begin(), raw.begin() + D);
  res.params.sigma.resize(D);
  for (std::size_t i = 0; i < D; ++i)
    res.params.sigma[i] = softplus(raw[D + i]) + kSigmaFloor;
  return res;
}

void HemgsModel::backward_stage(const StageCache& cache, std::span<const double> d_mu,
                                std::span<const double> d_sigma,
                                std::span<const double> d_step, Stage stage,
                                ModelGrads& g, std::vector<double>* d_grid_feat) const {
  const bool s1 = stage == Stage::Feature;
  const Mlp& hyper = s1 ? hyper1 : hyper2;
  const Mlp& vrp = s1 ? vrp1 : vrp2;
  const Mlp& phi = s1 ? phi1 : phi2;
  const Mlp& chead = s1 ? ctx_head1 : ctx_head2;
  const Mlp& head = s1 ? head1 : head2;
  Mlp::Grads& g_hyper = s1 ? g.hyper1 : g.hyper2;
  Mlp::Grads& g_vrp = s1 ? g.vrp1 : g.vrp2;
  Mlp::Grads& g_phi = s1 ? g.phi1 : g.phi2;
  Mlp::Grads& g_chead = s1 ? g.ctx_head1 : g.ctx_head2;
  Mlp::Grads& g_head = s1 ? g.head1 : g.head2;
  const std::size_t D = cfg_.attr_dim(stage);
  const std::size_t C = cfg_.ctx_dim;
  const std::size_t P = cfg_.prior_dim;
  const double s0 = cfg_.base_step(stage);

  // Distribution head.
  std::vector<double> d_raw(2 * D);
  for (std::size_t i = 0; i < D; ++i) {
    d_raw[i] = d_mu[i];
    d_raw[D + i] = d_sigma[i] * sigmoid(cache.raw[D + i]);
  }
  std::vector<double> d_head_in;
  head.backward(cache.head, d_raw, g_head, &d_head_in);
  std::vector<double> d_prior(d_head_in.begin(), d_head_in.begin() + P);
  std::vector<double> d_ctx(d_head_in.begin() + P, d_head_in.begin() + P + C);

  // Step gradient: external contribution (w.r.t. step = s0*mult) plus the
  // log2(mult) input of the head.
  std::vector<double> d_mult(D);
  for (std::size_t i = 0; i < D; ++i) {
    d_mult[i] = d_step[i] * s0 +
                d_head_in[P + C + i] / (cache.step_mult[i] * 0.6931471805599453);
  }
  std::vector<double> d_vrp_in;
  vrp.backward(cache.vrp, d_mult, g_vrp, &d_vrp_in);
  for (std::size_t i = 0; i < P; ++i) d_prior[i] += d_vrp_in[i];

  // Context path.
  if (cache.has_ctx) {
    std::vector<double> d_pooled;
    chead.backward(cache.ctx_head, d_ctx, g_chead, &d_pooled);
    const std::size_t m = cache.n_neighbors;
    std::vector<std::vector<double>> d_phi_out(m, std::vector<double>(C, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
      double dm = d_pooled[c] / double(m);
      for (std::size_t j = 0; j < m; ++j) d_phi_out[j][c] += dm;
      d_phi_out[cache.max_src[c]][c] += d_pooled[C + c];
    }
    for (std::size_t j = 0; j < m; ++j)
      phi.backward(cache.phi[j], d_phi_out[j], g_phi, nullptr);
  }

  // Hyperprior fusion; emit only the hash-grid slice of the input gradient.
  std::vector<double> d_hp_in;
  hyper.backward(cache.hyper, d_prior, g_hyper, d_grid_feat ? &d_hp_in : nullptr);
  if (d_grid_feat) {
    const std::size_t Fa = cfg_.agnostic_dim;
    const std::size_t G = grid_.out_dim();
    d_grid_feat->assign(d_hp_in.begin() + Fa, d_hp_in.begin() + Fa + G);
  }
}

// --- parameter plumbing -----------------------------------------------------

ModelGrads HemgsModel::make_grads() const {
  ModelGrads g;
  g.grid = grid_.make_grads();
  g.hyper1 = hyper1.make_grads();
  g.hyper2 = hyper2.make_grads();
  g.vrp1 = vrp1.make_grads();
  g.vrp2 = vrp2.make_grads();
  g.phi1 = phi1.make_grads();
  g.phi2 = phi2.make_grads();
  g.ctx_head1 = ctx_head1.make_grads();
  g.ctx_head2 = ctx_head2.make_grads();
  g.head1 = head1.make_grads();
  g.head2 = head2.make_grads();
  return g;
}

void ModelGrads::collect(std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < grid.size(); ++l)
    out.push_back({"grid.level" + std::to_string(l), grid[l].data(), grid[l].size()});
  for (Mlp::Grads* g : {&hyper1, &hyper2, &vrp1, &vrp2, &phi1, &phi2, &ctx_head1,
                        &ctx_head2, &head1, &head2})
    collect_grads(*g, out);
}

void HemgsModel::collect_params(std::vector<ParamRef>& out) {
  grid_.collect("grid", out);
  hemgs::collect_params(hyper1, "hyper1", out);
  hemgs::collect_params(hyper2, "hyper2", out);
  hemgs::collect_params(vrp1, "vrp1", out);
  hemgs::collect_params(vrp2, "vrp2", out);
  hemgs::collect_params(phi1, "phi1", out);
  hemgs::collect_params(phi2, "phi2", out);
  hemgs::collect_params(ctx_head1, "ctx_head1", out);
  hemgs::collect_params(ctx_head2, "ctx_head2", out);
  hemgs::collect_params(head1, "head1", out);
  hemgs::collect_params(head2, "head2", out);
}

Bytes HemgsModel::serialize() const {
  json cfg{{"feature_dim", cfg_.feature_dim},
           {"offsets_per_anchor", cfg_.offsets_per_anchor},
           {"hidden", cfg_.hidden},
           {"prior_dim", cfg_.prior_dim},
           {"ctx_dim", cfg_.ctx_dim},
           {"grid_levels", cfg_.grid.levels},
           {"grid_base", cfg_.grid.base_resolution},
           {"grid_max", cfg_.grid.max_resolution},
           {"grid_table", cfg_.grid.table_size},
           {"grid_feat", cfg_.grid.feature_dim},
           {"agnostic_k", cfg_.agnostic_k},
           {"agnostic_hidden", cfg_.agnostic_hidden},
           {"agnostic_dim", cfg_.agnostic_dim},
           {"rf_extent", cfg_.rf_extent},
           {"max_context", cfg_.max_context},
           {"s0_feature", cfg_.s0_feature},
           {"s0_scof", cfg_.s0_scof},
           {"sigma0_feature", cfg_.sigma0_feature},
           {"sigma0_scof", cfg_.sigma0_scof},
           {"sa_enabled", cfg_.sa_enabled},
           {"ar_enabled", cfg_.ar_enabled},
           {"init_seed", cfg_.init_seed}};
  std::vector<ParamRef> refs;
  const_cast<HemgsModel*>(this)->collect_params(refs);
  json tensors = json::array();
  std::size_t total = 0;
  for (const ParamRef& r : refs) {
    tensors.push_back({{"name", r.name}, {"size", r.size}});
    total += r.size;
  }
  json manifest{{"format", "hemgs-model"}, {"version", 1}, {"config", cfg},
                {"tensors", tensors}};
  std::string mstr = manifest.dump();

  Bytes out;
  out.reserve(8 + mstr.size() + total * 4);
  std::uint32_t mlen = std::uint32_t(mstr.size());
  out.insert(out.end(), {std::uint8_t('H'), std::uint8_t('M'), std::uint8_t('G'),
                         std::uint8_t('W')});
  out.insert(out.end(), reinterpret_cast<std::uint8_t*>(&mlen),
             reinterpret_cast<std::uint8_t*>(&mlen) + 4);
  out.insert(out.end(), mstr.begin(), mstr.end());
  for (const ParamRef& r : refs)
    for (std::size_t i = 0; i < r.size; ++i) {
      float f = float(r.data[i]);
      const auto* p = reinterpret_cast<const std::uint8_t*>(&f);
      out.insert(out.end(), p, p + 4);
    }
  return out;
}

HemgsModel HemgsModel::deserialize(const Bytes& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "HMGW", 4) != 0)
    throw ParseError("bad magic, not a serialized model");
  std::uint32_t mlen;
  std::memcpy(&mlen, bytes.data() + 4, 4);
  if (bytes.size() < 8 + std::size_t(mlen)) throw ParseError("truncated model manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + mlen);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "hemgs-model" || manifest.value("version", 0) != 1)
    throw ParseError("unsupported model format/version");
  const json& c = manifest.at("config");
  ModelConfig cfg;
  cfg.feature_dim = c.at("feature_dim");
  cfg.offsets_per_anchor = c.at("offsets_per_anchor");
  cfg.hidden = c.at("hidden");
  cfg.prior_dim = c.at("prior_dim");
  cfg.ctx_dim = c.at("ctx_dim");
  cfg.grid.levels = c.at("grid_levels");
  cfg.grid.base_resolution = c.at("grid_base");
  cfg.grid.max_resolution = c.at("grid_max");
  cfg.grid.table_size = c.at("grid_table");
  cfg.grid.feature_dim = c.at("grid_feat");
  cfg.agnostic_k = c.at("agnostic_k");
  cfg.agnostic_hidden = c.at("agnostic_hidden");
  cfg.agnostic_dim = c.at("agnostic_dim");
  cfg.rf_extent = c.at("rf_extent");
  cfg.max_context = c.at("max_context");
  cfg.s0_feature = c.at("s0_feature");
  cfg.s0_scof = c.at("s0_scof");
  cfg.sigma0_feature = c.at("sigma0_feature");
  cfg.sigma0_scof = c.at("sigma0_scof");
  cfg.sa_enabled = c.at("sa_enabled");
  cfg.ar_enabled = c.at("ar_enabled");
  cfg.init_seed = c.at("init_seed");

  HemgsModel model(cfg);
  std::vector<ParamRef> refs;
  model.collect_params(refs);
  std::size_t total = 0;
  for (const ParamRef& r : refs) total += r.size;
  if (bytes.size() != 8 + mlen + total * 4)
    throw ParseError("model blob size does not match manifest");
  const std::uint8_t* p = bytes.data() + 8 + mlen;
  for (const ParamRef& r : refs)
    for (std::size_t i = 0; i < r.size; ++i) {
      float f;
      std::memcpy(&f, p, 4);
      p += 4;
      r.data[i] = f;
    }
  return model;
}

void HemgsModel::canonicalize() {
  std::vector<ParamRef> refs;
  collect_params(refs);
  for (const ParamRef& r : refs)
    for (std::size_t i = 0; i < r.size; ++i) r.data[i] = double(float(r.data[i]));
}

std::uint64_t HemgsModel::digest() const {
  Bytes b = serialize();
  return fnv1a64(b.data(), b.size());
}

}  // namespace hemgs
