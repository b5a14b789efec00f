#pragma once

// Ordered layer specification plus a parameter store: the NetworkGraph used
// for both learned components. A spec is cheap and can describe full-scale
// networks without allocating them; `Network` instantiates it.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/diffkit/layers.hpp"
#include "ris/diffkit/params.hpp"
#include "ris/random.hpp"

namespace ris::diffkit {

enum class LayerKind {
  conv2d,
  dense,
  relu,
  leaky_relu,
  softmax,
  dropout,
  flatten,
  residual_begin,  // opens y = x + f(x)
  residual_end,    // closes it
};

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::softmax: return "softmax";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_begin: return "residual_begin";
    case LayerKind::residual_end: return "residual_end";
  }
  return "unknown";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::leaky_relu,
                 LayerKind::softmax, LayerKind::dropout, LayerKind::flatten,
                 LayerKind::residual_begin, LayerKind::residual_end})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown layer kind: " + s);
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;  // conv2d: C_in; dense: input nodes
  int out_channels = 0; // conv2d: C_out; dense: output nodes
  ConvGeometry conv{};
  double alpha = 0.2;   // leaky_relu slope
  double rate = 0.0;    // dropout probability
  std::string role;     // free-form tag, e.g. "gradient_step"

  static LayerSpec conv2d(int cin, int cout, std::string role = {}) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = cin;
    s.out_channels = cout;
    s.role = std::move(role);
    return s;
  }
  static LayerSpec dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_channels = in;
    s.out_channels = out;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec leaky_relu(double alpha) {
    LayerSpec s;
    s.kind = LayerKind::leaky_relu;
    s.alpha = alpha;
    return s;
  }
  static LayerSpec softmax() {
    LayerSpec s;
    s.kind = LayerKind::softmax;
    return s;
  }
  static LayerSpec dropout(double p) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = p;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }
  static LayerSpec residual_begin() {
    LayerSpec s;
    s.kind = LayerKind::residual_begin;
    return s;
  }
  static LayerSpec residual_end() {
    LayerSpec s;
    s.kind = LayerKind::residual_end;
    return s;
  }
};

struct NetworkSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  int count(LayerKind kind) const {
    int n = 0;
    for (const auto& l : layers) n += l.kind == kind ? 1 : 0;
    return n;
  }

  /// Output shape after every layer, validating channel bookkeeping and
  /// residual nesting on the way.
  std::vector<Shape> shapes() const {
    std::vector<Shape> out;
    std::vector<Shape> residual_inputs;
    Shape s = input;
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerKind::conv2d:
          if (l.in_channels != s.channels)
            throw std::invalid_argument("conv2d expects " + std::to_string(l.in_channels) +
                                        " channels, got " + std::to_string(s.channels));
          s = l.conv.output(s, l.out_channels);
          break;
        case LayerKind::dense:
          if (s.pixels() != 1 || l.in_channels != s.channels)
            throw std::invalid_argument("dense input size mismatch");
          s = {1, 1, l.out_channels};
          break;
        case LayerKind::flatten: s = {1, 1, s.size()}; break;
        case LayerKind::dropout:
          if (l.rate < 0.0 || l.rate >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
          break;
        case LayerKind::residual_begin: residual_inputs.push_back(s); break;
        case LayerKind::residual_end:
          if (residual_inputs.empty()) throw std::invalid_argument("unbalanced residual_end");
          if (residual_inputs.back() != s) throw std::invalid_argument("residual branch changes the shape");
          residual_inputs.pop_back();
          break;
        default: break;
      }
      out.push_back(s);
    }
    if (!residual_inputs.empty()) throw std::invalid_argument("unterminated residual block");
    return out;
  }

  Shape output() const {
    const auto all = shapes();
    return all.empty() ? input : all.back();
  }
};

/// Glorot-uniform limit sqrt(6 / (fan_in + fan_out)); conv fans include the
/// receptive field.
inline double glorot_limit(const LayerSpec& l) {
  double fan_in = l.in_channels;
  double fan_out = l.out_channels;
  if (l.kind == LayerKind::conv2d) {
    const double field = l.conv.kernel_h * l.conv.kernel_w;
    fan_in *= field;
    fan_out *= field;
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <class T>
class Network {
 public:
  /// Allocates parameters. Weights are Glorot-uniform from `init_seed`,
  /// biases zero.
  Network(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    spec_.shapes();
    Rng rng(init_seed);
    std::vector<std::vector<std::unique_ptr<Layer<T>>>*> stack{&layers_};
    std::vector<ResidualBlock<T>*> open;
    int index = 0;
    for (const auto& l : spec_.layers) {
      auto& target = *stack.back();
      const std::string tag = "layer" + std::to_string(index++);
      switch (l.kind) {
        case LayerKind::conv2d: {
          auto& w = params_.add(tag + ".kernel", l.conv.kernel_h * l.conv.kernel_w * l.in_channels,
                                l.out_channels);
          auto& b = params_.add(tag + ".bias", 1, l.out_channels);
          glorot_fill(w.value, glorot_limit(l), rng);
          target.push_back(std::make_unique<Conv2dLayer<T>>(w, b, l.conv));
          break;
        }
        case LayerKind::dense: {
          auto& w = params_.add(tag + ".weight", l.in_channels, l.out_channels);
          auto& b = params_.add(tag + ".bias", 1, l.out_channels);
          glorot_fill(w.value, glorot_limit(l), rng);
          target.push_back(std::make_unique<DenseLayer<T>>(w, b));
          break;
        }
        case LayerKind::relu: target.push_back(std::make_unique<LeakyReluLayer<T>>(T(0))); break;
        case LayerKind::leaky_relu:
          target.push_back(std::make_unique<LeakyReluLayer<T>>(static_cast<T>(l.alpha)));
          break;
        case LayerKind::softmax: target.push_back(std::make_unique<SoftmaxLayer<T>>()); break;
        case LayerKind::dropout: {
          auto d = std::make_unique<DropoutLayer<T>>(l.rate);
          dropouts_.push_back(d.get());
          target.push_back(std::move(d));
          break;
        }
        case LayerKind::flatten: target.push_back(std::make_unique<FlattenLayer<T>>()); break;
        case LayerKind::residual_begin: {
          auto block = std::make_unique<ResidualBlock<T>>();
          auto* raw = block.get();
          target.push_back(std::move(block));
          stack.push_back(&raw->inner());
          break;
        }
        case LayerKind::residual_end: stack.pop_back(); break;
      }
    }
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;

  const NetworkSpec& spec() const { return spec_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  Batch<T> forward(const Batch<T>& x, bool train) {
    if (x.shape != spec_.input) throw std::invalid_argument("network input shape mismatch: got " +
                                                            x.shape.str() + ", expected " + spec_.input.str());
    x.check("network");
    Batch<T> y = x;
    for (auto& layer : layers_) y = layer->forward(y, train);
    return y;
  }

  /// Accumulates parameter gradients and returns the input gradient.
  Batch<T> backward(const Batch<T>& grad_out) {
    Batch<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void zero_grad() { params_.zero_grad(); }

  // Each dropout layer gets its own stream derived from `seed`.
  void reseed_dropout(std::uint64_t seed) {
    for (std::size_t i = 0; i < dropouts_.size(); ++i) dropouts_[i]->reseed(mix_seed(seed, i));
  }
  void freeze_dropout_masks(bool frozen) {
    for (auto* d : dropouts_) d->freeze_mask(frozen);
  }

  void set_all_parameters(T value) {
    for (auto& p : params_) p.value.setConstant(value);
  }

 private:
  static void glorot_fill(Mat<T>& w, double limit, Rng& rng) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<T>(uniform(rng, -limit, limit));
  }

  NetworkSpec spec_;
  ParamStore<T> params_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<DropoutLayer<T>*> dropouts_;
};

}  // namespace ris::diffkit
