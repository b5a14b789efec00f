#pragma once

// Reflection beamforming from (extrapolated) channels: the unconstrained
// matched solution, projection onto the discrete phase set, and per-sample
// rate reports for both schemes.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "ris/beamsearch.hpp"
#include "ris/channel_model.hpp"
#include "ris/io.hpp"

namespace ris::beamforming {

struct PhaseQuantizer {
  int bits = 2;

  int levels() const { return 1 << bits; }
  double step() const { return 2.0 * kPi / levels(); }

  void validate() const {
    if (bits < 1 || bits > 30) throw std::invalid_argument("phase quantizer: bits must lie in [1, 30]");
  }
};

enum class BeamKind { continuous, quantized, codebook };

struct BeamVector {
  CVector theta;
  BeamKind kind = BeamKind::continuous;
};

/// theta* = conj(sum_k g_k .* h_k) / ||sum_k g_k .* h_k||
inline BeamVector continuous_optimum(const CMatrix& h_hat, const CMatrix& g_hat) {
  const CVector sum = cascade(h_hat, g_hat).rowwise().sum();
  const double norm = sum.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("continuous_optimum: summed product channel is zero");
  return {sum.conjugate() / norm, BeamKind::continuous};
}

/// Elementwise nearest point of the phase set: exp(i Delta round(arg/Delta)).
inline BeamVector quantize_project(const BeamVector& theta_star, const PhaseQuantizer& q) {
  q.validate();
  const double step = q.step();
  const long levels = q.levels();
  BeamVector out{CVector(theta_star.theta.size()), BeamKind::quantized};
  for (Eigen::Index n = 0; n < out.theta.size(); ++n) {
    long idx = std::lround(std::arg(theta_star.theta(n)) / step) % levels;
    if (idx < 0) idx += levels;
    out.theta(n) = std::polar(1.0, step * static_cast<double>(idx));
  }
  return out;
}

/// Principal eigenvector of sum_k c_k^* c_k^T: the exact maximizer of
/// sum_k |c_k^T theta|^2 over unit-norm theta. Diagnostic only; the scheme
/// itself uses continuous_optimum.
inline BeamVector eigen_upper_bound_beam(const CMatrix& h, const CMatrix& g) {
  const CMatrix c = cascade(h, g);
  const CMatrix gram = c.conjugate() * c.transpose();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(gram);
  const CVector v = es.eigenvectors().col(es.eigenvalues().size() - 1);
  return {v.normalized(), BeamKind::continuous};
}

/// Phase configurations are applied at unit total power (amplitude 1/sqrt(N)
/// per element), the same normalization the codebook columns carry, so every
/// beam in a report is compared at equal power.
inline CVector unit_power(const BeamVector& beam) {
  const double norm = beam.theta.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("unit_power: zero beam");
  return beam.theta / norm;
}

struct RateReport {
  std::optional<double> r_ext;   // extrapolation scheme, quantized beam
  std::optional<double> r_beam;  // beam searching scheme, predicted codeword
  double r_ub_cont = 0.0;        // continuous optimum on true channels
  double r_ub_cb = 0.0;          // best codeword on true channels
};

struct SchemeInputs {
  const CMatrix* h_hat = nullptr;  // extrapolated channels, when available
  const CMatrix* g_hat = nullptr;
  std::optional<int> predicted_label;
};

/// Every rate is measured on the true channels (h, g); predictions only pick
/// theta.
inline RateReport scheme_rates(const CMatrix& h, const CMatrix& g, const SchemeInputs& in,
                               const PhaseQuantizer& q, const beamsearch::Codebook& b, double noise_var) {
  RateReport r;
  if (in.h_hat != nullptr && in.g_hat != nullptr) {
    const auto theta = quantize_project(continuous_optimum(*in.h_hat, *in.g_hat), q);
    r.r_ext = achievable_rate(h, g, unit_power(theta), noise_var);
  }
  const auto rates = beamsearch::codebook_rates(h, g, b, noise_var);
  if (in.predicted_label) r.r_beam = rates.at(static_cast<std::size_t>(*in.predicted_label));
  r.r_ub_cont = achievable_rate(h, g, continuous_optimum(h, g).theta, noise_var);
  r.r_ub_cb = *std::max_element(rates.begin(), rates.end());
  return r;
}

inline constexpr const char* kRateCsvHeader = "sample_id,r,strategy,scheme,R_ext,R_beam,R_ub_cont,R_ub_cb,b,sigma2";

inline std::string rate_csv_row(int sample_id, double r, const std::string& strategy, const std::string& scheme,
                                const RateReport& rep, int bits, double sigma2) {
  const auto opt = [](const std::optional<double>& v) { return v ? io::fmt_num(*v) : std::string("nan"); };
  return std::to_string(sample_id) + "," + io::fmt_num(r) + "," + strategy + "," + scheme + "," + opt(rep.r_ext) +
         "," + opt(rep.r_beam) + "," + io::fmt_num(rep.r_ub_cont) + "," + io::fmt_num(rep.r_ub_cb) + "," +
         std::to_string(bits) + "," + io::fmt_num(sigma2);
}

}  // namespace ris::beamforming
