#pragma once

#include <cmath>
#include <stdexcept>

#include "ris/diffkit/params.hpp"

namespace ris::diffkit {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("adam: betas must lie in [0, 1)");
  }
};

/// One bias-corrected Adam update of every param in the store, using the
/// gradients currently held in it.
template <class T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  cfg.validate();
  const long t = ++store.step();
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const T correction2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.epsilon);
  for (auto& p : store) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      throw std::invalid_argument("adam: gradient shape mismatch for " + p.name);
    p.first_moment = b1 * p.first_moment + (T(1) - b1) * p.grad;
    p.second_moment = b2 * p.second_moment + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (p.first_moment.array() / correction1) /
                       ((p.second_moment.array() / correction2).sqrt() + eps);
  }
}

}  // namespace ris::diffkit
