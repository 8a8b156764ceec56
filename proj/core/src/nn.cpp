#include "hemgs/nn.hpp"

#include <cmath>

namespace hemgs {

double exp_clamp(double u) {
  if (u < -4) u = -4;
  if (u > 4) u = 4;
  return std::exp2(u);
}

namespace {

double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

double apply_act(Activation act, double z) {
  switch (act) {
    case Activation::None: return z;
    case Activation::Relu: return z > 0 ? z : 0;
    case Activation::Softplus: return softplus(z);
    case Activation::ExpClamp: return exp_clamp(z);
  }
  return z;
}

double act_deriv(Activation act, double z) {
  switch (act) {
    case Activation::None: return 1;
    case Activation::Relu: return z > 0 ? 1 : 0;
    case Activation::Softplus: return 1.0 / (1.0 + std::exp(-z));
    case Activation::ExpClamp:
      if (z <= -4 || z >= 4) return 0;
      return exp_clamp(z) * 0.6931471805599453;
  }
  return 1;
}

double gauss_from(std::uint64_t& ctr, std::uint64_t seed) {
  double u1 = u01(splitmix64(seed ^ ctr++));
  double u2 = u01(splitmix64(seed ^ ctr++));
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

Mlp Mlp::make(std::span<const std::size_t> widths, std::span<const Activation> acts) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1)
    throw InvariantError("Mlp::make: widths/activations mismatch");
  Mlp net;
  net.layers.resize(widths.size() - 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& lay = net.layers[l];
    lay.in = widths[l];
    lay.out = widths[l + 1];
    lay.W.assign(lay.in * lay.out, 0.0);
    lay.b.assign(lay.out, 0.0);
    lay.act = acts[l];
  }
  return net;
}

void Mlp::init_random(std::uint64_t seed, bool zero_final) {
  std::uint64_t ctr = 1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer& lay = layers[l];
    if (zero_final && l + 1 == layers.size()) {
      std::fill(lay.W.begin(), lay.W.end(), 0.0);
      std::fill(lay.b.begin(), lay.b.end(), 0.0);
      continue;
    }
    double scale = std::sqrt(2.0 / double(lay.in));
    for (double& w : lay.W) w = scale * gauss_from(ctr, seed);
    std::fill(lay.b.begin(), lay.b.end(), 0.0);
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const Layer& lay : layers) n += lay.W.size() + lay.b.size();
  return n;
}

Mlp::Grads Mlp::make_grads() const {
  Grads g;
  g.dW.resize(layers.size());
  g.db.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    g.dW[l].assign(layers[l].W.size(), 0.0);
    g.db[l].assign(layers[l].b.size(), 0.0);
  }
  return g;
}

std::vector<double> Mlp::forward(std::span<const double> x, Cache* cache) const {
  if (x.size() != in_dim()) throw InvariantError("Mlp::forward: input dim mismatch");
  if (cache) {
    cache->inputs.assign(layers.size(), {});
    cache->preacts.assign(layers.size(), {});
  }
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& lay = layers[l];
    if (cache) cache->inputs[l] = cur;
    std::vector<double> z(lay.out);
    for (std::size_t o = 0; o < lay.out; ++o) {
      const double* wrow = lay.W.data() + o * lay.in;
      double acc = lay.b[o];
      for (std::size_t i = 0; i < lay.in; ++i) acc += wrow[i] * cur[i];
      z[o] = acc;
    }
    if (cache) cache->preacts[l] = z;
    for (double& v : z) v = apply_act(lay.act, v);
    cur = std::move(z);
  }
  return cur;
}

void Mlp::backward(const Cache& cache, std::span<const double> dy, Grads& g,
                   std::vector<double>* dx) const {
  if (dy.size() != out_dim()) throw InvariantError("Mlp::backward: upstream dim mismatch");
  std::vector<double> grad(dy.begin(), dy.end());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& lay = layers[li];
    const auto& z = cache.preacts[li];
    const auto& x = cache.inputs[li];
    // dz = grad (*) act'(z)
    std::vector<double> dz(lay.out);
    for (std::size_t o = 0; o < lay.out; ++o) dz[o] = grad[o] * act_deriv(lay.act, z[o]);
    for (std::size_t o = 0; o < lay.out; ++o) {
      double* gw = g.dW[li].data() + o * lay.in;
      for (std::size_t i = 0; i < lay.in; ++i) gw[i] += dz[o] * x[i];
      g.db[li][o] += dz[o];
    }
    if (li > 0 || dx) {
      std::vector<double> prev(lay.in, 0.0);
      for (std::size_t o = 0; o < lay.out; ++o) {
        const double* wrow = lay.W.data() + o * lay.in;
        for (std::size_t i = 0; i < lay.in; ++i) prev[i] += wrow[i] * dz[o];
      }
      grad = std::move(prev);
    }
  }
  if (dx) *dx = std::move(grad);
}

void collect_params(Mlp& net, const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    out.push_back({prefix + ".W" + std::to_string(l), net.layers[l].W.data(),
                   net.layers[l].W.size()});
    out.push_back({prefix + ".b" + std::to_string(l), net.layers[l].b.data(),
                   net.layers[l].b.size()});
  }
}

void collect_grads(Mlp::Grads& g, std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    out.push_back({"dW", g.dW[l].data(), g.dW[l].size()});
    out.push_back({"db", g.db[l].data(), g.db[l].size()});
  }
}

}  // namespace hemgs
