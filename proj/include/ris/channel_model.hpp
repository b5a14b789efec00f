#pragma once

// Synthetic multipath geometry and frequency-domain RIS channels for a
// uniform planar array under OFDM, plus the achievable-rate functional.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ris/random.hpp"

namespace ris {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPi = std::numbers::pi;

struct ArrayGeometry {
  int n_v = 8;
  int n_h = 8;
  double spacing_over_lambda = 0.5;

  int size() const { return n_v * n_h; }

  void validate() const {
    if (n_v < 1 || n_h < 1) throw std::invalid_argument("array geometry needs n_v, n_h >= 1");
    if (!(spacing_over_lambda > 0.0)) throw std::invalid_argument("spacing_over_lambda must be > 0");
  }
};

struct OfdmGrid {
  int k_subcarriers = 64;
  double sample_period_s = 1e-8;  // 1 / bandwidth
  double carrier_hz = 2.5e9;

  void validate() const {
    if (k_subcarriers < 1) throw std::invalid_argument("OFDM grid needs K >= 1");
    if (!(sample_period_s > 0.0)) throw std::invalid_argument("sample period must be > 0");
  }
};

struct Path {
  cplx amplitude;  // carrier-independent part of the path gain
  double delay_s = 0.0;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
};

struct PathSet {
  std::vector<Path> paths;

  double total_power() const {
    double p = 0.0;
    for (const auto& path : paths) p += std::norm(path.amplitude);
    return p;
  }
};

// Knobs of the synthetic path generator. Angles are drawn uniformly inside
// the sector [lo, hi].
struct PathStatistics {
  double power_decay = 1.0;      // e-folds of expected power per path index
  double delay_fraction = 0.25;  // delays uniform over [0, delay_fraction * K * T_s)
  double elevation_lo = kPi / 6.0;
  double elevation_hi = 5.0 * kPi / 6.0;
  double azimuth_lo = -kPi / 2.0;
  double azimuth_hi = kPi / 2.0;
};

/// Steering vector of the UPA, vertical-index-major (a_v kron a_h).
/// Element (i, j) = exp(-i 2 pi (d/lambda) (i u + j v)) with u = cos(el),
/// v = sin(el) cos(az).
inline CVector steering_vector(const ArrayGeometry& geometry, double elevation_rad,
                               double azimuth_rad) {
  geometry.validate();
  const double u = std::cos(elevation_rad);
  const double v = std::sin(elevation_rad) * std::cos(azimuth_rad);
  CVector a(geometry.size());
  for (int i = 0; i < geometry.n_v; ++i) {
    for (int j = 0; j < geometry.n_h; ++j) {
      const double phase = -2.0 * kPi * geometry.spacing_over_lambda * (i * u + j * v);
      a(i * geometry.n_h + j) = std::polar(1.0, phase);
    }
  }
  return a;
}

/// Draws a random path set, normalized to unit total power. Deterministic in
/// `seed`.
inline PathSet gen_pathset(int p_count, const OfdmGrid& grid, std::uint64_t seed,
                           const PathStatistics& stats = {}) {
  if (p_count < 1) throw std::invalid_argument("gen_pathset: p_count must be >= 1");
  grid.validate();
  Rng rng(seed);
  const double max_delay = stats.delay_fraction * grid.k_subcarriers * grid.sample_period_s;
  PathSet set;
  set.paths.resize(static_cast<std::size_t>(p_count));
  for (int p = 0; p < p_count; ++p) {
    auto& path = set.paths[static_cast<std::size_t>(p)];
    const double sd = std::sqrt(std::exp(-stats.power_decay * p) / 2.0);
    const double re = standard_normal(rng);
    const double im = standard_normal(rng);
    path.amplitude = cplx(sd * re, sd * im);
    path.delay_s = max_delay * uniform_open(rng);
    path.elevation_rad = uniform(rng, stats.elevation_lo, stats.elevation_hi);
    path.azimuth_rad = uniform(rng, stats.azimuth_lo, stats.azimuth_hi);
  }
  const double norm = std::sqrt(set.total_power());
  for (auto& path : set.paths) path.amplitude /= norm;
  return set;
}

/// Frequency-domain channel, N x K. Column k is
/// (1/sqrt K) sum_p amp_p e^{-i2pi f tau_p} e^{-i2pi k tau_p/(K T_s)} a_p.
inline CMatrix freq_channel(const PathSet& paths, const ArrayGeometry& geometry,
                            const OfdmGrid& grid) {
  geometry.validate();
  grid.validate();
  const int n = geometry.size();
  const int k_count = grid.k_subcarriers;
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k_count));
  CMatrix h = CMatrix::Zero(n, k_count);
  for (const auto& path : paths.paths) {
    const CVector a = steering_vector(geometry, path.elevation_rad, path.azimuth_rad);
    // carrier phase reduced modulo one cycle before scaling to radians
    const double carrier_cycles = grid.carrier_hz * path.delay_s;
    const cplx gain = path.amplitude *
                      std::polar(1.0, -2.0 * kPi * (carrier_cycles - std::floor(carrier_cycles)));
    const double frac = path.delay_s / (k_count * grid.sample_period_s);
    for (int k = 0; k < k_count; ++k) {
      const cplx w = inv_sqrt_k * gain * std::polar(1.0, -2.0 * kPi * k * frac);
      h.col(k) += w * a;
    }
  }
  return h;
}

/// Real N x K x 4 stack [Re H; Im H; Re G; Im G]. Stored as an (N*K) x 4
/// row-major matrix: row n*K + k holds the four slices of entry (n, k).
struct ChannelTensor {
  int n = 0;
  int k = 0;
  RowMatrix values;

  ChannelTensor() = default;
  ChannelTensor(int rows, int cols) : n(rows), k(cols), values(RowMatrix::Zero(rows * cols, 4)) {}

  double& at(int row, int col, int slice) { return values(row * k + col, slice); }
  double at(int row, int col, int slice) const { return values(row * k + col, slice); }
};

inline ChannelTensor build_tensor(const CMatrix& h, const CMatrix& g) {
  if (h.rows() != g.rows() || h.cols() != g.cols())
    throw std::invalid_argument("build_tensor: H and G dimensions differ");
  ChannelTensor t(static_cast<int>(h.rows()), static_cast<int>(h.cols()));
  for (int r = 0; r < t.n; ++r) {
    for (int c = 0; c < t.k; ++c) {
      t.at(r, c, 0) = h(r, c).real();
      t.at(r, c, 1) = h(r, c).imag();
      t.at(r, c, 2) = g(r, c).real();
      t.at(r, c, 3) = g(r, c).imag();
    }
  }
  return t;
}

struct ChannelPair {
  CMatrix h;
  CMatrix g;
};

inline ChannelPair split_tensor(const ChannelTensor& t) {
  ChannelPair out{CMatrix(t.n, t.k), CMatrix(t.n, t.k)};
  for (int r = 0; r < t.n; ++r) {
    for (int c = 0; c < t.k; ++c) {
      out.h(r, c) = cplx(t.at(r, c, 0), t.at(r, c, 1));
      out.g(r, c) = cplx(t.at(r, c, 2), t.at(r, c, 3));
    }
  }
  return out;
}

/// Cascaded per-subcarrier channel c_k = g_k .* h_k, N x K.
inline CMatrix cascade(const CMatrix& h, const CMatrix& g) {
  if (h.rows() != g.rows() || h.cols() != g.cols())
    throw std::invalid_argument("cascade: H and G dimensions differ");
  return h.cwiseProduct(g);
}

/// R = (1/K) sum_k log2(1 + |(g_k .* h_k)^T theta|^2 / sigma2), bits/s/Hz.
inline double achievable_rate(const CMatrix& h, const CMatrix& g, const CVector& theta,
                              double noise_var) {
  if (!(noise_var > 0.0)) throw std::invalid_argument("achievable_rate: noise variance must be > 0");
  if (theta.size() != h.rows()) throw std::invalid_argument("achievable_rate: theta length mismatch");
  const CVector y = cascade(h, g).transpose() * theta;
  double rate = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) rate += std::log2(1.0 + std::norm(y(k)) / noise_var);
  return rate / static_cast<double>(y.size());
}

}  // namespace ris
