#pragma once

// Active antenna selection: per-row categorical logits, Gumbel-Max sampling
// with exclusion of already chosen elements, the temperature-relaxed rows
// used for straight-through gradients, sub-sampling / zero-filling and the
// entropy penalty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ris/channel_model.hpp"
#include "ris/diffkit/tensor.hpp"
#include "ris/io.hpp"
#include "ris/random.hpp"

namespace ris::selection {

// Logit surrogate for an excluded category.
inline constexpr double kMaskedLogit = -1e30;

struct SelectionState {
  RowMatrix logits;  // M x N
  double tau = 5.0;

  int m() const { return static_cast<int>(logits.rows()); }
  int n() const { return static_cast<int>(logits.cols()); }

  void validate() const {
    if (m() < 1 || m() > n()) throw std::invalid_argument("selection: need 1 <= M <= N");
    if (!(tau > 0.0)) throw std::invalid_argument("selection: temperature must be > 0");
    if (!logits.allFinite()) throw std::invalid_argument("selection: logits must be finite");
  }
};

/// Logits drawn i.i.d. normal with the given variance.
inline SelectionState init_state(int m, int n, std::uint64_t seed, double variance = 0.05,
                                 double tau = 5.0) {
  Rng rng(seed);
  SelectionState s{RowMatrix(m, n), tau};
  const double sd = std::sqrt(variance);
  for (Eigen::Index i = 0; i < s.logits.size(); ++i) s.logits.data()[i] = sd * standard_normal(rng);
  s.validate();
  return s;
}

/// Hard sub-sampling matrix held as its index list c_0..c_{M-1}.
struct SubsampleMatrix {
  int n = 0;
  std::vector<int> indices;

  int m() const { return static_cast<int>(indices.size()); }

  RowMatrix dense() const {
    RowMatrix s = RowMatrix::Zero(m(), n);
    for (int r = 0; r < m(); ++r) s(r, indices[static_cast<std::size_t>(r)]) = 1.0;
    return s;
  }

  // One-hot rows with pairwise distinct, in-range columns.
  bool valid() const {
    std::vector<char> seen(static_cast<std::size_t>(std::max(n, 0)), 0);
    for (int c : indices) {
      if (c < 0 || c >= n || seen[static_cast<std::size_t>(c)]) return false;
      seen[static_cast<std::size_t>(c)] = 1;
    }
    return true;
  }
};

struct RelaxedSample {
  SubsampleMatrix hard;
  RowMatrix soft;   // softmax_tau rows over the non-excluded support
  RowMatrix noise;  // Gumbel draws
  RowMatrix available;  // 1 where the category was still selectable
  double tau = 1.0;
};

/// Row-wise softmax of the logits.
inline RowMatrix class_probs(const RowMatrix& logits) {
  RowMatrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

inline RowMatrix gumbel_noise(int rows, int cols, Rng& rng) {
  RowMatrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gumbel_from_uniform(uniform_open(rng));
  return w;
}

namespace detail {

inline int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace detail

/// Draws S row by row: excluded categories are masked, fresh Gumbel noise is
/// added, the hard index is the argmax (lowest index on ties) and the soft row
/// is softmax_tau over the remaining support.
inline RelaxedSample sample_selection(const SelectionState& state, Rng& rng) {
  state.validate();
  const int m = state.m();
  const int n = state.n();
  RelaxedSample out;
  out.tau = state.tau;
  out.hard.n = n;
  out.noise = gumbel_noise(m, n, rng);
  out.soft = RowMatrix::Zero(m, n);
  out.available = RowMatrix::Ones(m, n);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (int r = 0; r < m; ++r) {
    Eigen::RowVectorXd perturbed(n);
    for (int c = 0; c < n; ++c) {
      if (taken[static_cast<std::size_t>(c)]) {
        out.available(r, c) = 0.0;
        perturbed(c) = kMaskedLogit;
      } else {
        perturbed(c) = state.logits(r, c) + out.noise(r, c);
      }
    }
    const int pick = detail::argmax_lowest(perturbed);
    out.hard.indices.push_back(pick);
    taken[static_cast<std::size_t>(pick)] = 1;
    const double mx = perturbed(pick);
    for (int c = 0; c < n; ++c)
      out.soft(r, c) = out.available(r, c) > 0.0 ? std::exp((perturbed(c) - mx) / state.tau) : 0.0;
    out.soft.row(r) /= out.soft.row(r).sum();
  }
  return out;
}

/// Soft rows of `sample` recomputed for other logits, holding its noise and
/// exclusion mask fixed. Used to differentiate through the relaxation.
inline RowMatrix relaxed_rows(const RowMatrix& logits, const RelaxedSample& sample) {
  if (logits.rows() != sample.noise.rows() || logits.cols() != sample.noise.cols())
    throw std::invalid_argument("relaxed_rows: logits shape does not match the sample");
  RowMatrix soft = RowMatrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      if (sample.available(r, c) > 0.0) mx = std::max(mx, logits(r, c) + sample.noise(r, c));
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
      if (sample.available(r, c) > 0.0) soft(r, c) = std::exp((logits(r, c) + sample.noise(r, c) - mx) / sample.tau);
    soft.row(r) /= soft.row(r).sum();
  }
  return soft;
}

/// [Z~]_{:,:,i} = S [Z]_{:,:,i}: gathers the selected rows, M x K x 4.
inline ChannelTensor subsample(const ChannelTensor& z, const SubsampleMatrix& s) {
  if (s.n != z.n) throw std::invalid_argument("subsample: S has " + std::to_string(s.n) +
                                              " columns, tensor has " + std::to_string(z.n) + " rows");
  if (!s.valid()) throw std::invalid_argument("subsample: invalid sub-sampling matrix");
  ChannelTensor out(s.m(), z.k);
  for (int r = 0; r < s.m(); ++r)
    out.values.middleRows(static_cast<Eigen::Index>(r) * z.k, z.k) =
        z.values.middleRows(static_cast<Eigen::Index>(s.indices[static_cast<std::size_t>(r)]) * z.k, z.k);
  return out;
}

/// Places row m of Z~ at row c_m of an N x K x 4 zero tensor.
inline ChannelTensor zero_fill(const ChannelTensor& sub, const SubsampleMatrix& s) {
  if (sub.n != s.m()) throw std::invalid_argument("zero_fill: row count does not match S");
  if (!s.valid()) throw std::invalid_argument("zero_fill: duplicate or out-of-range indices in S");
  ChannelTensor out(s.n, sub.k);
  for (int r = 0; r < s.m(); ++r)
    out.values.middleRows(static_cast<Eigen::Index>(s.indices[static_cast<std::size_t>(r)]) * sub.k, sub.k) =
        sub.values.middleRows(static_cast<Eigen::Index>(r) * sub.k, sub.k);
  return out;
}

/// zero_fill(subsample(z)) applied to every sample of a batch shaped N x K x 4.
template <class T>
diffkit::Batch<T> mask_rows(const diffkit::Batch<T>& z, const std::vector<int>& indices) {
  diffkit::Batch<T> out(z.count, z.shape);
  const int k = z.shape.width;
  for (int s = 0; s < z.count; ++s)
    for (int c : indices) {
      const Eigen::Index row = (static_cast<Eigen::Index>(s) * z.shape.height + c) * k;
      out.data.middleRows(row, k) = z.data.middleRows(row, k);
    }
  return out;
}

/// Relaxed counterpart of mask_rows: row c_m of the output is
/// sum_n soft(m, n) Z[n]. Its gradient with respect to `soft` is what the
/// straight-through estimator back-propagates.
template <class T>
diffkit::Batch<T> relaxed_fill(const diffkit::Batch<T>& z, const RelaxedSample& sample) {
  diffkit::Batch<T> out(z.count, z.shape);
  const int k = z.shape.width;
  const int n = z.shape.height;
  for (int s = 0; s < z.count; ++s) {
    for (int r = 0; r < sample.hard.m(); ++r) {
      const Eigen::Index dst = (static_cast<Eigen::Index>(s) * n + sample.hard.indices[static_cast<std::size_t>(r)]) * k;
      for (int c = 0; c < n; ++c) {
        const double w = sample.soft(r, c);
        if (w == 0.0) continue;
        out.data.middleRows(dst, k) += static_cast<T>(w) * z.data.middleRows((static_cast<Eigen::Index>(s) * n + c) * k, k);
      }
    }
  }
  return out;
}

/// dL/dS(m, n) = sum_{s,k,i} dL/dZbar_s[c_m, k, i] * Z_s[n, k, i].
template <class T>
RowMatrix grad_wrt_rows(const diffkit::Batch<T>& grad_zbar, const diffkit::Batch<T>& z,
                        const SubsampleMatrix& hard) {
  const int n = z.shape.height;
  const int k = z.shape.width;
  RowMatrix g = RowMatrix::Zero(hard.m(), n);
  for (int s = 0; s < z.count; ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * n * k;
    // Z_s as N x (K*4), row-major contiguous
    const Eigen::Map<const diffkit::Mat<T>> zs(z.data.data() + base * 4, n, k * 4);
    for (int r = 0; r < hard.m(); ++r) {
      const Eigen::Index row = base + static_cast<Eigen::Index>(hard.indices[static_cast<std::size_t>(r)]) * k;
      const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> gr(grad_zbar.data.data() + row * 4, k * 4);
      g.row(r) += (zs * gr.transpose()).transpose().template cast<double>();
    }
  }
  return g;
}

/// Gradient of the logits through the relaxed rows: for each row,
/// (1/tau) s .* (g - <s, g>). Excluded columns get exactly zero.
inline RowMatrix selection_backward(const RowMatrix& grad_soft, const RelaxedSample& sample) {
  if (sample.soft.size() == 0) throw std::invalid_argument("selection_backward: no cached sample");
  if (grad_soft.rows() != sample.soft.rows() || grad_soft.cols() != sample.soft.cols())
    throw std::invalid_argument("selection_backward: gradient shape mismatch");
  RowMatrix g(grad_soft.rows(), grad_soft.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double dot = sample.soft.row(r).dot(grad_soft.row(r));
    g.row(r) = (sample.soft.row(r).array() * (grad_soft.row(r).array() - dot)) / sample.tau;
  }
  return g;
}

/// L_s = -sum pi log pi (natural log, 0 log 0 = 0).
inline double entropy_penalty(const RowMatrix& logits) {
  const RowMatrix p = class_probs(logits);
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// d L_s / d xi_{m,j} = -pi_j (log pi_j + H_m).
inline RowMatrix entropy_penalty_grad(const RowMatrix& logits) {
  const RowMatrix p = class_probs(logits);
  RowMatrix g(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double h = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(r, c) > 0.0) h -= p(r, c) * std::log(p(r, c));
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      g(r, c) = p(r, c) > 0.0 ? -p(r, c) * (std::log(p(r, c)) + h) : 0.0;
  }
  return g;
}

/// Noise-free greedy readout: row by row, the largest logit among the
/// columns not yet taken.
inline SubsampleMatrix extract_pattern(const RowMatrix& logits) {
  SubsampleMatrix s;
  s.n = static_cast<int>(logits.cols());
  std::vector<char> taken(static_cast<std::size_t>(s.n), 0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = -1;
    for (int c = 0; c < s.n; ++c) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      if (best < 0 || logits(r, c) > logits(r, best)) best = c;
    }
    if (best < 0) throw std::invalid_argument("extract_pattern: more rows than columns");
    taken[static_cast<std::size_t>(best)] = 1;
    s.indices.push_back(best);
  }
  return s;
}

/// Evenly spaced row-major pattern: indices floor(i * N / M).
inline SubsampleMatrix uniform_pattern(int n, int m) {
  if (m < 1 || m > n) throw std::invalid_argument("uniform_pattern: need 1 <= M <= N");
  SubsampleMatrix s;
  s.n = n;
  for (int i = 0; i < m; ++i) s.indices.push_back(static_cast<int>((static_cast<long long>(i) * n) / m));
  return s;
}

/// Linear annealing: tau at 1-based iteration i of n_iter.
inline double tau_at(long i, long n_iter, double tau_start, double tau_end) {
  if (n_iter <= 1) return tau_start;
  const double step = (tau_start - tau_end) / static_cast<double>(n_iter - 1);
  return tau_start - static_cast<double>(i - 1) * step;
}

inline io::json pattern_json(const ArrayGeometry& geometry, const SubsampleMatrix& s) {
  return {{"n_v", geometry.n_v}, {"n_h", geometry.n_h}, {"m", s.m()}, {"indices", s.indices}, {"row_major", true}};
}

}  // namespace ris::selection
