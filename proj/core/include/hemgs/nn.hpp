#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hemgs/common.hpp"

namespace hemgs {

enum class Activation { None, Relu, Softplus, ExpClamp };

// y = 2^clamp(u, -4, 4); positive and bounded, used by the step predictor.
double exp_clamp(double u);

// Dense MLP with hand-derived reverse-mode gradients. Weights are row-major
// (out x in).
struct Mlp {
  struct Layer {
    std::size_t in = 0, out = 0;
    std::vector<double> W;  // out*in
    std::vector<double> b;  // out
    Activation act = Activation::None;
  };
  std::vector<Layer> layers;

  static Mlp make(std::span<const std::size_t> widths, std::span<const Activation> acts);
  // He-normal hidden init from a deterministic seed; zero_final zeroes the
  // last layer's weights and biases.
  void init_random(std::uint64_t seed, bool zero_final = false);

  std::size_t in_dim() const { return layers.front().in; }
  std::size_t out_dim() const { return layers.back().out; }
  std::size_t param_count() const;

  struct Cache {
    std::vector<std::vector<double>> inputs;   // per layer
    std::vector<std::vector<double>> preacts;  // per layer
  };
  struct Grads {
    std::vector<std::vector<double>> dW, db;
  };
  Grads make_grads() const;

  std::vector<double> forward(std::span<const double> x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into g; writes input gradient to dx when
  // non-null. cache must come from a forward on the same input.
  void backward(const Cache& cache, std::span<const double> dy, Grads& g,
                std::vector<double>* dx) const;
};

// Flat view over a set of parameter arrays, for the optimizer and
// finite-difference checks.
struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

void collect_params(Mlp& net, const std::string& prefix, std::vector<ParamRef>& out);
void collect_grads(Mlp::Grads& g, std::vector<ParamRef>& out);

}  // namespace hemgs
