#pragma once

#include <optional>

#include "hemgs/agnostic.hpp"
#include "hemgs/context_select.hpp"
#include "hemgs/entropy_model.hpp"
#include "hemgs/hash_grid.hpp"
#include "hemgs/nn.hpp"

namespace hemgs {

// Per-element positive quantization steps, value units.
using QuantStep = std::vector<double>;

inline constexpr double kLambdaMin = 1e-4;
inline constexpr double kLambdaMax = 1e-2;

// Admissible user rate hyperparameter.
struct RateLambda {
  double value;
  explicit RateLambda(double v) : value(v) {
    if (!(v >= kLambdaMin && v <= kLambdaMax))
      throw InvariantError("lambda outside admissible range [1e-4, 1e-2]");
  }
  // log10, normalized to [-1, 1] over the admissible range.
  double normalized() const;
};

enum class Stage { Feature, ScalingOffsets };

struct ModelConfig {
  std::uint32_t feature_dim = 32;
  std::uint32_t offsets_per_anchor = 10;
  std::uint32_t hidden = 64;     // MLP hidden width
  std::uint32_t prior_dim = 64;  // hyperprior feature width
  std::uint32_t ctx_dim = 64;    // context feature width
  HashGridConfig grid;
  std::uint32_t agnostic_k = 16, agnostic_hidden = 32, agnostic_dim = 32;
  std::uint32_t rf_extent = kDefaultReceptiveField;
  std::uint32_t max_context = kDefaultMaxContext;
  double s0_feature = 1.0;  // base quantization step, features
  double s0_scof = 0.01;    // base step, scaling+offsets
  double sigma0_feature = 0.0;   // initial sigma raw bias (softplus input)
  double sigma0_scof = -2.25;
  bool sa_enabled = true;  // scene-agnostic hyperprior path
  bool ar_enabled = true;  // autoregressive context path
  std::uint64_t init_seed = 1;

  std::size_t scof_dim() const { return 6 + 3 * std::size_t(offsets_per_anchor); }
  std::size_t attr_dim(Stage s) const {
    return s == Stage::Feature ? feature_dim : scof_dim();
  }
  double base_step(Stage s) const { return s == Stage::Feature ? s0_feature : s0_scof; }
};

struct StageResult {
  std::vector<double> prior;  // hyperprior feature
  std::vector<double> ctx;    // context feature (zero when no neighbors)
  QuantStep step;
  GaussianParams params;
};

struct StageCache;  // opaque, defined in model.cpp

// Gradients for every learnable tensor, mirroring HemgsModel layout.
struct ModelGrads {
  std::vector<std::vector<double>> grid;
  Mlp::Grads hyper1, hyper2, vrp1, vrp2, phi1, phi2, ctx_head1, ctx_head2, head1, head2;
  void collect(std::vector<ParamRef>& out);
};

// The scene-specific learned model: multi-resolution hash grid plus the MLP
// blocks of the variable-rate predictor, hyperprior network, autoregressive
// context network, and the Gaussian distribution heads (one set per coding
// stage).
class HemgsModel {
 public:
  explicit HemgsModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  HashGrid& grid() { return grid_; }
  const HashGrid& grid() const { return grid_; }

  // --- individual operations (pure functions of parameters + inputs) -------

  // Fusion of the scene-agnostic feature, the scene-specific hash feature and
  // (stage 2) the previously decoded local feature. Disabled paths are fed as
  // zeros.
  std::vector<double> hyperprior_feature(std::span<const double> agnostic_feat,
                                         std::span<const double> grid_feat,
                                         std::span<const double> decoded_feature,
                                         Stage stage) const;

  // lambda-conditioned per-element quantization step; exp-clamped to
  // [s0/16, 16*s0] around the stage base step.
  QuantStep predict_step(std::span<const double> prior, RateLambda lambda,
                         Stage stage) const;

  // Permutation-invariant aggregation of a context set. rel offsets are in
  // voxel units; attrs are the neighbors' decoded values of the attribute
  // being coded. Empty context yields the zero vector.
  std::vector<double> context_feature(std::span<const std::array<double, 3>> rel,
                                      std::span<const std::vector<double>> attrs,
                                      Stage stage) const;

  GaussianParams predict_distribution(std::span<const double> prior,
                                      std::span<const double> ctx,
                                      std::span<const double> step, Stage stage) const;

  // --- fused per-anchor prediction with gradient support -------------------

  StageResult predict_stage(std::span<const double> agnostic_feat,
                            std::span<const double> grid_feat,
                            std::span<const double> decoded_feature, RateLambda lambda,
                            std::span<const std::array<double, 3>> ctx_rel,
                            std::span<const std::vector<double>> ctx_attrs, Stage stage,
                            StageCache* cache = nullptr) const;

  // Reverse pass for predict_stage. d_mu/d_sigma are gradients w.r.t. the
  // Gaussian parameters (sigma after softplus+floor), d_step w.r.t. the step
  // vector. Accumulates into g; optionally emits the gradient w.r.t. the
  // hash-grid feature input.
  void backward_stage(const StageCache& cache, std::span<const double> d_mu,
                      std::span<const double> d_sigma, std::span<const double> d_step,
                      Stage stage, ModelGrads& g,
                      std::vector<double>* d_grid_feat) const;

  // --- parameter plumbing ---------------------------------------------------

  void init_params();
  ModelGrads make_grads() const;
  void collect_params(std::vector<ParamRef>& out);

  Bytes serialize() const;  // f32 blob + manifest; the SIDE section payload
  static HemgsModel deserialize(const Bytes& bytes);
  // Rounds every parameter through f32 so encoder-side predictions match a
  // decoder that reloads the serialized model bit-exactly.
  void canonicalize();
  std::uint64_t digest() const;

  Mlp hyper1, hyper2;        // hyperprior fusion MLPs
  Mlp vrp1, vrp2;            // variable-rate predictors
  Mlp phi1, phi2;            // shared per-neighbor context MLPs
  Mlp ctx_head1, ctx_head2;  // pooled-context heads
  Mlp head1, head2;          // distribution heads (mu, sigma_raw)

 private:
  ModelConfig cfg_;
  HashGrid grid_;
};

StageCache* new_stage_cache();
void free_stage_cache(StageCache*);

// RAII holder for the opaque cache.
struct StageCachePtr {
  StageCache* p;
  StageCachePtr() : p(new_stage_cache()) {}
  ~StageCachePtr() { free_stage_cache(p); }
  StageCachePtr(const StageCachePtr&) = delete;
  StageCachePtr& operator=(const StageCachePtr&) = delete;
  StageCache* get() { return p; }
};

}  // namespace hemgs
