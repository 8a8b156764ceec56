#include "hemgs/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace hemgs {

double train_noise(std::uint64_t seed, std::uint64_t iter, std::uint64_t anchor,
                   std::uint64_t stage, std::uint64_t elem) {
  std::uint64_t h = splitmix64(seed ^ 0x7c6d3a9e1f5b0842ULL);
  h = splitmix64(h ^ iter);
  h = splitmix64(h ^ (anchor * 2 + stage));
  h = splitmix64(h ^ elem);
  return u01(h);
}

std::uint32_t train_batch_anchor(std::uint64_t seed, std::uint64_t iter,
                                 std::uint64_t slot, std::uint64_t n) {
  std::uint64_t h = splitmix64(splitmix64(seed ^ 0x51ed2700c3b1a94fULL ^ iter) ^ slot);
  return std::uint32_t(h % n);
}

namespace {

std::int64_t quantize_value(double v, double s) {
  std::int64_t k = std::llround(v / s);
  double err = v - double(k) * s;
  if (err > 0.5 * s) ++k;
  else if (err < -0.5 * s) --k;
  return k;
}

}  // namespace

Trainer::Trainer(const AnchorScene& scene, const ModelConfig& mcfg,
                 const TrainConfig& tcfg, const AgnosticExtractor& extractor)
    : scene_(scene), cfg_(tcfg), model_(mcfg) {
  scene.validate();
  if (scene.size() == 0) throw InvariantError("cannot train on an empty scene");
  if (mcfg.feature_dim != scene.feature_dim ||
      mcfg.offsets_per_anchor != scene.offsets_per_anchor)
    throw InvariantError("model attribute widths do not match scene");
  if (extractor.out_dim() != mcfg.agnostic_dim)
    throw InvariantError("extractor width does not match model config");
  if (cfg_.lambda_grid.empty()) throw InvariantError("empty lambda grid");
  for (double l : cfg_.lambda_grid) {
    RateLambda check(l);  // range-validate
    (void)check;
  }

  const std::size_t n = scene.size();
  qlocs_.resize(n);
  xbar_.resize(n);
  norm_loc_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    qlocs_[i] = quantize_location(scene.anchors[i].location, scene.aabb);
    xbar_[i] = dequantize_location(qlocs_[i], scene.aabb);
    for (int a = 0; a < 3; ++a) {
      double t = (xbar_[i][a] - scene.aabb.min[a]) / scene.aabb.extent(a);
      norm_loc_[i][a] = std::min(std::max(t, 0.0), 1.0);
    }
  }
  order_ = coding_order(qlocs_, scene.aabb, scene.voxel_size, /*strict=*/true);
  index_ = std::make_unique<ContextIndex>(order_);
  agnostic_ = extractor.features(xbar_, scene.voxel_size);
  raw_scof_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw_scof_[i] = scene.anchors[i].scaling;
    raw_scof_[i].insert(raw_scof_[i].end(), scene.anchors[i].offsets.begin(),
                        scene.anchors[i].offsets.end());
  }

  model_.collect_params(params_);
  adam_m_.resize(params_.size());
  adam_v_.resize(params_.size());
  for (std::size_t p = 0; p < params_.size(); ++p) {
    adam_m_[p].assign(params_[p].size, 0.0);
    adam_v_[p].assign(params_[p].size, 0.0);
  }
}

LossBreakdown Trainer::anchor_loss(std::size_t iter, std::uint32_t anchor,
                                   RateLambda lambda, double weight,
                                   ModelGrads* grads) {
  LossBreakdown out;
  out.lambda = lambda.value;

  HashGrid::Cache grid_cache;
  std::vector<double> grid_feat = model_.grid().query(norm_loc_[anchor], &grid_cache);

  ContextSet ctx = select_context(*index_, anchor, model_.config().rf_extent,
                                  model_.config().max_context);
  std::vector<std::array<double, 3>> rel(ctx.neighbors.size());
  for (std::size_t j = 0; j < ctx.neighbors.size(); ++j) rel[j] = ctx.neighbors[j].rel;

  std::vector<double> d_grid_feat_total(grid_feat.size(), 0.0);

  for (int si = 0; si < 2; ++si) {
    const Stage stage = si == 0 ? Stage::Feature : Stage::ScalingOffsets;
    const std::size_t D = model_.config().attr_dim(stage);
    const Anchor& an = scene_.anchors[anchor];
    std::span<const double> values =
        si == 0 ? std::span<const double>(an.feature) : std::span<const double>(raw_scof_[anchor]);

    // Teacher forcing: neighbors contribute their raw attributes, and stage 2
    // is conditioned on the raw local feature; neither carries a gradient.
    std::vector<std::vector<double>> nb(ctx.neighbors.size());
    for (std::size_t j = 0; j < ctx.neighbors.size(); ++j) {
      const Anchor& na = scene_.anchors[ctx.neighbors[j].anchor];
      nb[j] = si == 0 ? na.feature : raw_scof_[ctx.neighbors[j].anchor];
    }
    std::span<const double> cond =
        si == 0 ? std::span<const double>{} : std::span<const double>(an.feature);

    StageCachePtr cache;
    StageResult st = model_.predict_stage(agnostic_[anchor], grid_feat, cond, lambda,
                                          rel, nb, stage, grads ? cache.get() : nullptr);

    std::vector<double> noise(D);
    for (std::size_t i = 0; i < D; ++i)
      noise[i] = train_noise(cfg_.seed, iter, anchor, std::uint64_t(si), i);

    double rate = rate_bits(st.params, st.step, values, RateMode::Noise, noise);
    out.rate_bits += weight * rate;

    // Distortion with per-group weights.
    auto group_w = [&](std::size_t i) {
      if (si == 0) return cfg_.w_feature;
      return i < 6 ? cfg_.w_scaling : cfg_.w_offsets;
    };
    std::vector<double> d_step_dist(D, 0.0);
    double dist = 0;
    for (std::size_t i = 0; i < D; ++i) {
      const double v = values[i], s = st.step[i], w = group_w(i);
      if (cfg_.relaxed_distortion) {
        double e = s * (noise[i] - 0.5);
        dist += w * e * e;
        d_step_dist[i] = 2.0 * w * e * (noise[i] - 0.5);
      } else {
        double k = double(quantize_value(v, s));
        double e = k * s - v;
        dist += w * e * e;
        // Straight-through: treat round(v/s) as pass-through of v/s, giving
        // d(k*s)/ds = k - v/s.
        d_step_dist[i] = 2.0 * w * e * (k - v / s);
      }
    }
    out.distortion += weight * dist;

    if (grads) {
      RateGrads rg = rate_bits_grad(st.params, st.step, values, noise,
                                    weight * lambda.value);
      for (std::size_t i = 0; i < D; ++i) rg.dstep[i] += weight * d_step_dist[i];
      std::vector<double> d_grid_feat;
      model_.backward_stage(*cache.get(), rg.dmu, rg.dsigma, rg.dstep, stage, *grads,
                            &d_grid_feat);
      for (std::size_t i = 0; i < d_grid_feat.size(); ++i)
        d_grid_feat_total[i] += d_grid_feat[i];
    }
  }

  if (grads) model_.grid().backward(grid_cache, d_grid_feat_total, grads->grid);

  out.total = out.distortion + lambda.value * out.rate_bits;
  return out;
}

LossBreakdown Trainer::batch_loss(std::size_t iter, ModelGrads* grads) {
  const std::size_t n = scene_.size();
  const std::size_t batch = std::min(cfg_.batch, n);
  const std::size_t K = cfg_.lambda_grid.size();

  std::vector<double> lambdas;
  if (cfg_.average_lambdas)
    lambdas = cfg_.lambda_grid;
  else
    lambdas = {cfg_.lambda_grid[iter % K]};

  const double w = 1.0 / (double(batch) * double(lambdas.size()));
  LossBreakdown acc;
  double lam_mean = 0;
  for (std::size_t slot = 0; slot < batch; ++slot) {
    std::uint32_t a = train_batch_anchor(cfg_.seed, iter, slot, n);
    for (double l : lambdas) {
      LossBreakdown one = anchor_loss(iter, a, RateLambda(l), w, grads);
      acc.distortion += one.distortion;
      acc.rate_bits += one.rate_bits;
      acc.total += one.total;
      lam_mean += w * l;
    }
  }
  acc.lambda = lam_mean;
  return acc;
}

LossBreakdown Trainer::step(std::size_t iter) {
  ModelGrads g = model_.make_grads();
  LossBreakdown loss = batch_loss(iter, &g);

  std::vector<ParamRef> grefs;
  g.collect(grefs);
  if (grefs.size() != params_.size())
    throw InvariantError("gradient/parameter layout mismatch");

  double decay = 1.0;
  if (cfg_.cosine_decay && cfg_.iterations > 1)
    decay = 0.5 * (1.0 + std::cos(M_PI * double(iter) / double(cfg_.iterations)));

  ++adam_t_;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, double(adam_t_));
  const double bc2 = 1.0 - std::pow(b2, double(adam_t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const bool is_grid = params_[p].name.rfind("grid", 0) == 0;
    const double lr = (is_grid ? cfg_.lr_grid : cfg_.lr_mlp) * decay;
    double* x = params_[p].data;
    const double* dg = grefs[p].data;
    for (std::size_t i = 0; i < params_[p].size; ++i) {
      adam_m_[p][i] = b1 * adam_m_[p][i] + (1 - b1) * dg[i];
      adam_v_[p][i] = b2 * adam_v_[p][i] + (1 - b2) * dg[i] * dg[i];
      x[i] -= lr * (adam_m_[p][i] / bc1) / (std::sqrt(adam_v_[p][i] / bc2) + eps);
    }
  }
  return loss;
}

TrainResult Trainer::run() {
  TrainResult res;
  Bytes checkpoint = model_.serialize();
  double initial_total = 0;
  bool have_initial = false;

  for (std::size_t iter = 0; iter < cfg_.iterations; ++iter) {
    LossBreakdown loss = step(iter);
    if (iter == 0) res.first = loss;
    res.last = loss;
    res.iterations_run = iter + 1;
    if (!have_initial) {
      initial_total = std::abs(loss.total) + 1.0;
      have_initial = true;
    }
    const bool bad = !std::isfinite(loss.total) ||
                     std::abs(loss.total) > cfg_.divergence_factor * initial_total;
    if (bad) {
      // Restore the last good parameters in place.
      HemgsModel good = HemgsModel::deserialize(checkpoint);
      std::vector<ParamRef> src;
      good.collect_params(src);
      for (std::size_t p = 0; p < params_.size(); ++p)
        std::copy(src[p].data, src[p].data + src[p].size, params_[p].data);
      res.diverged = true;
      break;
    }
    if (cfg_.checkpoint_every && (iter + 1) % cfg_.checkpoint_every == 0)
      checkpoint = model_.serialize();
  }
  return res;
}

RdPoint eval_rd(const AnchorScene& scene, const HemgsModel& model, RateLambda lambda,
                const AgnosticExtractor& extractor, double w_feature, double w_scaling,
                double w_offsets) {
  RdPoint pt;
  pt.lambda = lambda.value;
  Bytes bits = compress(scene, model, lambda, extractor);
  StorageReport rep = inspect(bits);
  pt.bits_per_anchor = rep.bits_per_anchor;

  AnchorScene dec = decompress(bits, extractor);
  // Decoded anchors are emitted in coding order of the quantized locations;
  // recompute that order on the original scene to pair them up.
  std::vector<QuantLocation> qlocs(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i)
    qlocs[i] = quantize_location(scene.anchors[i].location, scene.aabb);
  CodingOrder order = coding_order(qlocs, scene.aabb, scene.voxel_size, true);

  double dist = 0;
  for (std::size_t rank = 0; rank < scene.size(); ++rank) {
    const Anchor& a = scene.anchors[order.perm[rank]];
    const Anchor& b = dec.anchors[rank];
    for (std::size_t i = 0; i < a.feature.size(); ++i) {
      double e = a.feature[i] - b.feature[i];
      dist += w_feature * e * e;
    }
    for (std::size_t i = 0; i < 6; ++i) {
      double e = a.scaling[i] - b.scaling[i];
      dist += w_scaling * e * e;
    }
    for (std::size_t i = 0; i < a.offsets.size(); ++i) {
      double e = a.offsets[i] - b.offsets[i];
      dist += w_offsets * e * e;
    }
  }
  pt.distortion = scene.size() ? dist / double(scene.size()) : 0.0;
  return pt;
}

}  // namespace hemgs
