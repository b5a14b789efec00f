#pragma once

// Beam searching scheme: Kronecker oversampled codebook, exhaustive oracle
// labels, the fully connected classifier and its cross-entropy loss.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ris/channel_model.hpp"
#include "ris/diffkit/network.hpp"

namespace ris::beamsearch {

using diffkit::Batch;
using diffkit::LayerSpec;
using diffkit::NetworkSpec;

struct Codebook {
  int r1 = 2;
  int r2 = 2;
  CMatrix columns;  // N x (r1 n_v * r2 n_h)

  int size() const { return static_cast<int>(columns.cols()); }
};

/// [C]_{i,j} = exp(-i 2 pi (d/lambda) i cos(pi j / (r n))) / sqrt(n)
inline CMatrix dft_factor(int n, int r, double spacing_over_lambda) {
  CMatrix c(n, r * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r * n; ++j)
      c(i, j) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                           -2.0 * kPi * spacing_over_lambda * i * std::cos(kPi * j / (r * n)));
  return c;
}

inline Codebook build_codebook(const ArrayGeometry& geometry, int r1, int r2) {
  geometry.validate();
  if (r1 < 1 || r2 < 1) throw std::invalid_argument("codebook: oversampling factors must be >= 1");
  const CMatrix cv = dft_factor(geometry.n_v, r1, geometry.spacing_over_lambda);
  const CMatrix ch = dft_factor(geometry.n_h, r2, geometry.spacing_over_lambda);
  Codebook b{r1, r2, CMatrix(geometry.size(), cv.cols() * ch.cols())};
  // Kronecker product, vertical index major on both axes
  for (Eigen::Index iv = 0; iv < cv.rows(); ++iv)
    for (Eigen::Index jv = 0; jv < cv.cols(); ++jv)
      for (Eigen::Index ih = 0; ih < ch.rows(); ++ih)
        for (Eigen::Index jh = 0; jh < ch.cols(); ++jh)
          b.columns(iv * ch.rows() + ih, jv * ch.cols() + jh) = cv(iv, jv) * ch(ih, jh);
  return b;
}

struct BeamLabel {
  int index = 0;

  std::vector<double> one_hot(int classes) const {
    std::vector<double> p(static_cast<std::size_t>(classes), 0.0);
    p.at(static_cast<std::size_t>(index)) = 1.0;
    return p;
  }
};

/// Achievable rate of every codebook column on one channel pair.
inline std::vector<double> codebook_rates(const CMatrix& h, const CMatrix& g, const Codebook& b, double noise_var) {
  if (!(noise_var > 0.0)) throw std::invalid_argument("codebook_rates: noise variance must be > 0");
  if (b.columns.rows() != h.rows()) throw std::invalid_argument("codebook_rates: codebook/channel size mismatch");
  const CMatrix gains = cascade(h, g).transpose() * b.columns;  // K x |B|
  std::vector<double> rates(static_cast<std::size_t>(b.size()), 0.0);
  for (Eigen::Index j = 0; j < gains.cols(); ++j) {
    double r = 0.0;
    for (Eigen::Index k = 0; k < gains.rows(); ++k) r += std::log2(1.0 + std::norm(gains(k, j)) / noise_var);
    rates[static_cast<std::size_t>(j)] = r / static_cast<double>(gains.rows());
  }
  return rates;
}

/// Index of the rate-maximizing codebook column; ties go to the lowest index.
inline BeamLabel oracle_label(const CMatrix& h, const CMatrix& g, const Codebook& b, double noise_var) {
  const auto rates = codebook_rates(h, g, b, noise_var);
  return {static_cast<int>(std::max_element(rates.begin(), rates.end()) - rates.begin())};
}

/// flatten -> [dense, leaky_relu(alpha), dropout]* -> dense, leaky_relu ->
/// dense -> softmax. Dropout follows every hidden layer except the last.
inline NetworkSpec build_beam_net(int n, int k, const std::vector<int>& hidden, int classes,
                                  double dropout = 0.5, double alpha = 0.2) {
  if (n < 1 || k < 1 || classes < 1 || hidden.empty())
    throw std::invalid_argument("beam net: dimensions and widths must be positive");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("beam net: hidden widths must be positive");
  NetworkSpec net;
  net.input = {n, k, 4};
  net.layers.push_back(LayerSpec::flatten());
  int width = n * k * 4;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    net.layers.push_back(LayerSpec::dense(width, hidden[i]));
    net.layers.push_back(LayerSpec::leaky_relu(alpha));
    if (i + 1 < hidden.size()) net.layers.push_back(LayerSpec::dropout(dropout));
    width = hidden[i];
  }
  net.layers.push_back(LayerSpec::dense(width, classes));
  net.layers.push_back(LayerSpec::softmax());
  net.shapes();
  return net;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// L_b = -(1/M_tr) sum_mu log max(p^_{label}, 1e-12), with its gradient with
/// respect to the predicted probabilities.
template <class T>
std::pair<double, Batch<T>> cross_entropy(const Batch<T>& probs, const std::vector<int>& labels) {
  if (probs.count < 1) throw std::invalid_argument("cross_entropy: empty batch");
  if (static_cast<int>(labels.size()) != probs.count) throw std::invalid_argument("cross_entropy: batch mismatch");
  Batch<T> grad(probs.count, probs.shape);
  double loss = 0.0;
  const double inv = 1.0 / probs.count;
  for (int s = 0; s < probs.count; ++s) {
    const int y = labels[static_cast<std::size_t>(s)];
    if (y < 0 || y >= probs.data.cols()) throw std::invalid_argument("cross_entropy: label out of range");
    const double p = static_cast<double>(probs.data(s, y));
    loss -= inv * std::log(std::max(p, kProbabilityFloor));
    if (p > kProbabilityFloor) grad.data(s, y) = static_cast<T>(-inv / p);
  }
  return {loss, std::move(grad)};
}

/// General soft-target form: -(1/M_tr) sum_mu sum_i p_i log max(p^_i, floor).
inline double cross_entropy(const RowMatrix& predicted, const RowMatrix& target) {
  if (predicted.rows() < 1) throw std::invalid_argument("cross_entropy: empty batch");
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw std::invalid_argument("cross_entropy: batch mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i)
    if (target.data()[i] != 0.0) loss -= target.data()[i] * std::log(std::max(predicted.data()[i], kProbabilityFloor));
  return loss / static_cast<double>(predicted.rows());
}

/// Argmax of one output row, lowest index on ties.
template <class T>
int argmax_row(const Batch<T>& probs, int sample) {
  int best = 0;
  for (int c = 1; c < probs.data.cols(); ++c)
    if (probs.data(sample, c) > probs.data(sample, best)) best = c;
  return best;
}

template <class T>
BeamLabel predict_beam(diffkit::Network<T>& net, const ChannelTensor& zbar) {
  Batch<T> in;
  in.count = 1;
  in.shape = {zbar.n, zbar.k, 4};
  in.data = zbar.values.template cast<T>();
  return {argmax_row(net.forward(in, false), 0)};
}

}  // namespace ris::beamsearch
