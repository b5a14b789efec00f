#pragma once

// Unrolled proximal-gradient CNN that maps zero-filled partial channels to
// full channels, its MSE training loss and the NMSE metric.

#include <stdexcept>
#include <utility>

#include "ris/channel_model.hpp"
#include "ris/diffkit/network.hpp"

namespace ris::extrapolation {

using diffkit::Batch;
using diffkit::LayerSpec;
using diffkit::NetworkSpec;

struct ExtrapNetSpec {
  int n_p = 5;     // proximal-gradient iterations
  int n_q = 6;     // ReLU convolutions per iteration
  int width = 64;  // hidden channels

  /// 1 + N_p (N_q + 2)
  int conv_layers() const { return 1 + n_p * (n_q + 2); }

  void validate() const {
    if (n_p < 1 || n_q < 1 || width < 1) throw std::invalid_argument("extrapolation net: n_p, n_q, width must be >= 1");
  }
};

/// Layer list: a residual linear 4->4 conv, then per iteration
///   x <- x + conv_out(relu(conv ... relu(conv_in(conv_grad(x)))))
/// with conv_grad 4->4 linear, N_q ReLU convs (first 4->width), conv_out
/// width->4 linear. Every conv is 3x3, pad 1, stride 1.
inline NetworkSpec build_extrap_net(const ExtrapNetSpec& spec, int n, int k) {
  spec.validate();
  if (n < 3 || k < 3) throw std::invalid_argument("extrapolation net: n, k must be >= 3");
  NetworkSpec net;
  net.input = {n, k, 4};
  net.layers.push_back(LayerSpec::residual_begin());
  net.layers.push_back(LayerSpec::conv2d(4, 4, "initial"));
  net.layers.push_back(LayerSpec::residual_end());
  for (int it = 0; it < spec.n_p; ++it) {
    net.layers.push_back(LayerSpec::residual_begin());
    net.layers.push_back(LayerSpec::conv2d(4, 4, "gradient_step"));
    int channels = 4;
    for (int q = 0; q < spec.n_q; ++q) {
      net.layers.push_back(LayerSpec::conv2d(channels, spec.width, "proximal"));
      net.layers.push_back(LayerSpec::relu());
      channels = spec.width;
    }
    net.layers.push_back(LayerSpec::conv2d(channels, 4, "proximal_output"));
    net.layers.push_back(LayerSpec::residual_end());
  }
  net.shapes();
  return net;
}

inline Batch<double> to_batch(const ChannelTensor& z) {
  Batch<double> b;
  b.count = 1;
  b.shape = {z.n, z.k, 4};
  b.data = z.values;
  return b;
}

inline ChannelTensor from_batch(const Batch<double>& b, int sample = 0) {
  ChannelTensor z(b.shape.height, b.shape.width);
  z.values = b.data.middleRows(static_cast<Eigen::Index>(sample) * b.shape.pixels(), b.shape.pixels());
  return z;
}

/// Z^ = G_W(Zbar) for a single tensor.
template <class T>
ChannelTensor extrapolate(diffkit::Network<T>& net, const ChannelTensor& zbar) {
  if (net.spec().input != diffkit::Shape{zbar.n, zbar.k, 4})
    throw std::invalid_argument("extrapolate: tensor shape does not match the network");
  const auto out = net.forward(diffkit::cast_batch<T>(to_batch(zbar)), false);
  return from_batch(diffkit::cast_batch<double>(out));
}

/// L_c = 1/(4 N K M_tr) sum ||target - pred||_F^2, with its gradient with
/// respect to `pred`.
template <class T>
std::pair<double, Batch<T>> mse_loss(const Batch<T>& pred, const Batch<T>& target) {
  if (pred.count < 1) throw std::invalid_argument("mse_loss: empty batch");
  if (pred.count != target.count || pred.shape != target.shape)
    throw std::invalid_argument("mse_loss: shape mismatch");
  const double denom = static_cast<double>(pred.data.size());
  Batch<T> grad = pred;
  grad.data = pred.data - target.data;
  const double loss = grad.data.template cast<double>().squaredNorm() / denom;
  grad.data *= static_cast<T>(2.0 / denom);
  return {loss, std::move(grad)};
}

/// (||H^-H||^2 + ||G^-G||^2) / (||H||^2 + ||G||^2)
inline double nmse(const CMatrix& h_hat, const CMatrix& g_hat, const CMatrix& h, const CMatrix& g) {
  if (h_hat.rows() != h.rows() || h_hat.cols() != h.cols() || g_hat.rows() != g.rows() || g_hat.cols() != g.cols())
    throw std::invalid_argument("nmse: shape mismatch");
  const double energy = h.squaredNorm() + g.squaredNorm();
  if (!(energy > 0.0)) throw std::invalid_argument("nmse: zero-norm target");
  return ((h_hat - h).squaredNorm() + (g_hat - g).squaredNorm()) / energy;
}

/// Per-sample NMSE on tensors, averaged over a batch.
template <class T>
double batch_nmse(const Batch<T>& pred, const Batch<T>& target) {
  if (pred.count != target.count || pred.shape != target.shape) throw std::invalid_argument("nmse: shape mismatch");
  const Eigen::Index per = pred.shape.pixels();
  double sum = 0.0;
  for (int s = 0; s < pred.count; ++s) {
    const auto t = target.data.middleRows(s * per, per).template cast<double>();
    const auto p = pred.data.middleRows(s * per, per).template cast<double>();
    const double energy = t.squaredNorm();
    if (!(energy > 0.0)) throw std::invalid_argument("nmse: zero-norm target");
    sum += (p - t).squaredNorm() / energy;
  }
  return sum / pred.count;
}

}  // namespace ris::extrapolation
