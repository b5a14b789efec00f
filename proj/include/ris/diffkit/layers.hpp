#pragma once

// Forward/backward kernels for the layer types used by the extrapolation
// CNN and the beam classifier, plus stateful layer objects that cache what
// their backward pass needs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/diffkit/params.hpp"
#include "ris/diffkit/tensor.hpp"
#include "ris/random.hpp"

namespace ris::diffkit {

struct ConvGeometry {
  int kernel_h = 3;
  int kernel_w = 3;
  int padding = 1;
  int stride = 1;

  Shape output(Shape in, int out_channels) const {
    const int h = (in.height + 2 * padding - kernel_h) / stride + 1;
    const int w = (in.width + 2 * padding - kernel_w) / stride + 1;
    if (stride < 1 || h < 1 || w < 1) throw std::invalid_argument("conv2d: kernel does not fit input");
    return {h, w, out_channels};
  }
};

namespace detail {

// Patch matrix: one row per output pixel, columns ordered (dy, dx, c_in).
template <class T>
Mat<T> im2col(const Batch<T>& in, const ConvGeometry& g, Shape out) {
  const int cin = in.shape.channels;
  Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(in.count) * out.pixels(),
                             g.kernel_h * g.kernel_w * cin);
  for (int s = 0; s < in.count; ++s) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(s) * out.height + oy) * out.width + ox;
        for (int dy = 0; dy < g.kernel_h; ++dy) {
          const int iy = oy * g.stride - g.padding + dy;
          if (iy < 0 || iy >= in.shape.height) continue;
          for (int dx = 0; dx < g.kernel_w; ++dx) {
            const int ix = ox * g.stride - g.padding + dx;
            if (ix < 0 || ix >= in.shape.width) continue;
            const Eigen::Index src = (static_cast<Eigen::Index>(s) * in.shape.height + iy) * in.shape.width + ix;
            cols.row(row).segment((dy * g.kernel_w + dx) * cin, cin) = in.data.row(src);
          }
        }
      }
    }
  }
  return cols;
}

template <class T>
void col2im_add(const Mat<T>& cols, const ConvGeometry& g, Shape out, Batch<T>& grad_in) {
  const int cin = grad_in.shape.channels;
  for (int s = 0; s < grad_in.count; ++s) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(s) * out.height + oy) * out.width + ox;
        for (int dy = 0; dy < g.kernel_h; ++dy) {
          const int iy = oy * g.stride - g.padding + dy;
          if (iy < 0 || iy >= grad_in.shape.height) continue;
          for (int dx = 0; dx < g.kernel_w; ++dx) {
            const int ix = ox * g.stride - g.padding + dx;
            if (ix < 0 || ix >= grad_in.shape.width) continue;
            const Eigen::Index dst =
                (static_cast<Eigen::Index>(s) * grad_in.shape.height + iy) * grad_in.shape.width + ix;
            grad_in.data.row(dst) += cols.row(row).segment((dy * g.kernel_w + dx) * cin, cin);
          }
        }
      }
    }
  }
}

template <class T>
void check_kernels(const Batch<T>& in, const Mat<T>& kernels, const Mat<T>& bias, const ConvGeometry& g) {
  in.check("conv2d");
  if (kernels.rows() != g.kernel_h * g.kernel_w * in.shape.channels)
    throw std::invalid_argument("conv2d: kernel depth does not match input channels");
  if (bias.rows() != 1 || bias.cols() != kernels.cols())
    throw std::invalid_argument("conv2d: bias must be 1 x C_out");
}

}  // namespace detail

/// Zero-padded cross-correlation. `kernels` is (kh*kw*C_in) x C_out with rows
/// ordered (dy, dx, c_in); `bias` is 1 x C_out.
template <class T>
Batch<T> conv2d_forward(const Batch<T>& input, const Mat<T>& kernels, const Mat<T>& bias,
                        const ConvGeometry& g = {}) {
  detail::check_kernels(input, kernels, bias, g);
  const Shape out_shape = g.output(input.shape, static_cast<int>(kernels.cols()));
  Batch<T> out;
  out.count = input.count;
  out.shape = out_shape;
  out.data = detail::im2col(input, g, out_shape) * kernels;
  out.data.rowwise() += bias.row(0);
  return out;
}

template <class T>
struct ConvGrads {
  Batch<T> input_grad;
  Mat<T> kernel_grad;
  Mat<T> bias_grad;
};

template <class T>
ConvGrads<T> conv2d_backward(const Batch<T>& upstream, const Batch<T>& cached_input,
                             const Mat<T>& kernels, const ConvGeometry& g = {}) {
  const Mat<T> no_bias = Mat<T>::Zero(1, kernels.cols());
  detail::check_kernels(cached_input, kernels, no_bias, g);
  const Shape out_shape = g.output(cached_input.shape, static_cast<int>(kernels.cols()));
  if (upstream.count != cached_input.count || upstream.shape != out_shape)
    throw std::invalid_argument("conv2d_backward: upstream gradient shape mismatch");
  const Mat<T> cols = detail::im2col(cached_input, g, out_shape);
  ConvGrads<T> grads;
  grads.kernel_grad = cols.transpose() * upstream.data;
  grads.bias_grad = upstream.data.colwise().sum();
  grads.input_grad = Batch<T>(cached_input.count, cached_input.shape);
  detail::col2im_add<T>(upstream.data * kernels.transpose(), g, out_shape, grads.input_grad);
  return grads;
}

template <class T>
T leaky_relu(T x, T alpha) {
  return x > T(0) ? x : alpha * x;
}

/// Row-wise softmax, max-subtracted.
template <class T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer objects

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch<T> forward(const Batch<T>& x, bool train) = 0;
  virtual Batch<T> backward(const Batch<T>& grad) = 0;
};

template <class T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(Param<T>& kernels, Param<T>& bias, ConvGeometry g)
      : kernels_(kernels), bias_(bias), geometry_(g) {}

  Batch<T> forward(const Batch<T>& x, bool) override {
    detail::check_kernels(x, kernels_.value, bias_.value, geometry_);
    input_shape_ = x.shape;
    input_count_ = x.count;
    out_shape_ = geometry_.output(x.shape, static_cast<int>(kernels_.value.cols()));
    cols_ = detail::im2col(x, geometry_, out_shape_);
    Batch<T> out;
    out.count = x.count;
    out.shape = out_shape_;
    out.data = cols_ * kernels_.value;
    out.data.rowwise() += bias_.value.row(0);
    return out;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    if (grad.shape != out_shape_ || grad.count != input_count_)
      throw std::invalid_argument("conv2d backward: gradient shape mismatch");
    kernels_.grad.noalias() += cols_.transpose() * grad.data;
    bias_.grad += grad.data.colwise().sum();
    Batch<T> dx(input_count_, input_shape_);
    detail::col2im_add<T>(grad.data * kernels_.value.transpose(), geometry_, out_shape_, dx);
    return dx;
  }

 private:
  Param<T>& kernels_;
  Param<T>& bias_;
  ConvGeometry geometry_;
  Shape input_shape_{}, out_shape_{};
  int input_count_ = 0;
  Mat<T> cols_;
};

template <class T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(Param<T>& weights, Param<T>& bias) : weights_(weights), bias_(bias) {}

  Batch<T> forward(const Batch<T>& x, bool) override {
    if (x.shape.size() != weights_.value.rows() || x.shape.pixels() != 1)
      throw std::invalid_argument("dense: input features do not match weights");
    input_ = x.data;
    Batch<T> out;
    out.count = x.count;
    out.shape = {1, 1, static_cast<int>(weights_.value.cols())};
    out.data = input_ * weights_.value;
    out.data.rowwise() += bias_.value.row(0);
    return out;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    weights_.grad.noalias() += input_.transpose() * grad.data;
    bias_.grad += grad.data.colwise().sum();
    Batch<T> dx;
    dx.count = grad.count;
    dx.shape = {1, 1, static_cast<int>(weights_.value.rows())};
    dx.data = grad.data * weights_.value.transpose();
    return dx;
  }

 private:
  Param<T>& weights_;
  Param<T>& bias_;
  Mat<T> input_;
};

template <class T>
class LeakyReluLayer final : public Layer<T> {
 public:
  // alpha = 0 gives a plain ReLU.
  explicit LeakyReluLayer(T alpha) : alpha_(alpha) {}

  Batch<T> forward(const Batch<T>& x, bool) override {
    input_ = x;
    Batch<T> out = x;
    out.data = x.data.unaryExpr([a = alpha_](T v) { return leaky_relu(v, a); });
    return out;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    Batch<T> dx = grad;
    dx.data = grad.data.binaryExpr(input_.data,
                                   [a = alpha_](T g, T v) { return v > T(0) ? g : a * g; });
    return dx;
  }

 private:
  T alpha_;
  Batch<T> input_;
};

template <class T>
class SoftmaxLayer final : public Layer<T> {
 public:
  Batch<T> forward(const Batch<T>& x, bool) override {
    out_ = x;
    out_.data = softmax_rows(x.data);
    return out_;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    Batch<T> dx = grad;
    const Eigen::Matrix<T, Eigen::Dynamic, 1> dots = grad.data.cwiseProduct(out_.data).rowwise().sum();
    dx.data = out_.data.cwiseProduct(grad.data - dots.replicate(1, grad.data.cols()));
    return dx;
  }

 private:
  Batch<T> out_;
};

/// Inverted dropout: kept activations are scaled by 1/(1-p) in training, the
/// layer is the identity in evaluation.
template <class T>
class DropoutLayer final : public Layer<T> {
 public:
  explicit DropoutLayer(double p) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double rate() const { return p_; }

  Batch<T> forward(const Batch<T>& x, bool train) override {
    train_ = train;
    if (!train || p_ == 0.0) return x;
    const bool reuse = frozen_ && mask_.rows() == x.data.rows() && mask_.cols() == x.data.cols();
    if (!reuse) {
      mask_.resize(x.data.rows(), x.data.cols());
      const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
      for (Eigen::Index i = 0; i < mask_.size(); ++i)
        mask_.data()[i] = uniform_open(rng_) < p_ ? T(0) : keep_scale;
    }
    Batch<T> out = x;
    out.data = x.data.cwiseProduct(mask_);
    return out;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    if (!train_ || p_ == 0.0) return grad;
    Batch<T> dx = grad;
    dx.data = grad.data.cwiseProduct(mask_);
    return dx;
  }

 private:
  double p_;
  Rng rng_{0};
  bool frozen_ = false;
  bool train_ = false;
  Mat<T> mask_;
};

template <class T>
class FlattenLayer final : public Layer<T> {
 public:
  Batch<T> forward(const Batch<T>& x, bool) override {
    in_shape_ = x.shape;
    Batch<T> out;
    out.count = x.count;
    out.shape = {1, 1, x.shape.size()};
    out.data = Eigen::Map<const Mat<T>>(x.data.data(), x.count, x.shape.size());
    return out;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    Batch<T> dx;
    dx.count = grad.count;
    dx.shape = in_shape_;
    dx.data = Eigen::Map<const Mat<T>>(grad.data.data(),
                                       static_cast<Eigen::Index>(grad.count) * in_shape_.pixels(),
                                       in_shape_.channels);
    return dx;
  }

 private:
  Shape in_shape_{};
};

/// y = x + f(x) for an inner chain f.
template <class T>
class ResidualBlock final : public Layer<T> {
 public:
  std::vector<std::unique_ptr<Layer<T>>>& inner() { return inner_; }

  Batch<T> forward(const Batch<T>& x, bool train) override {
    Batch<T> y = x;
    for (auto& layer : inner_) y = layer->forward(y, train);
    if (y.shape != x.shape) throw std::invalid_argument("residual: inner chain changes the shape");
    y.data += x.data;
    return y;
  }

  Batch<T> backward(const Batch<T>& grad) override {
    Batch<T> g = grad;
    for (auto it = inner_.rbegin(); it != inner_.rend(); ++it) g = (*it)->backward(g);
    g.data += grad.data;
    return g;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> inner_;
};

}  // namespace ris::diffkit
