#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ris/diffkit/network.hpp"
#include "ris/random.hpp"

namespace ris::diffkit {

struct GradCheckOptions {
  int min_coordinates = 200;
  double step = 1e-5;
  // Denominator floor of the relative error; keeps coordinates with vanishing
  // gradients from reporting pure roundoff as error.
  double abs_floor = 1e-6;
  std::uint64_t seed = 1;
  bool include_input = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coordinates = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss` with respect to the given scalar slots,
/// compared with their analytic derivatives.
template <class T>
GradCheckResult finite_difference_check(const std::function<double()>& loss,
                                        const std::vector<std::pair<T*, double>>& slots,
                                        const GradCheckOptions& opt) {
  GradCheckResult res;
  for (const auto& [slot, analytic] : slots) {
    const T saved = *slot;
    *slot = static_cast<T>(saved + opt.step);
    const double up = loss();
    *slot = static_cast<T>(saved - opt.step);
    const double down = loss();
    *slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw std::runtime_error("grad_check: non-finite loss");
    const double numeric = (up - down) / (2.0 * opt.step);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic, numeric, opt.abs_floor));
    ++res.coordinates;
  }
  return res;
}

/// Loss callback: network output -> (loss, d loss / d output).
template <class T>
using LossFn = std::function<std::pair<double, Batch<T>>(const Batch<T>&)>;

/// Compares backprop gradients of a network against central differences on a
/// random subsample of parameters (all of them when fewer than
/// `min_coordinates`). Dropout masks are frozen for the duration.
template <class T>
GradCheckResult grad_check(Network<T>& net, const LossFn<T>& loss_fn, const Batch<T>& input,
                           const GradCheckOptions& opt = {}) {
  net.freeze_dropout_masks(false);
  net.reseed_dropout(opt.seed);
  net.zero_grad();
  const Batch<T> out = net.forward(input, true);
  auto [loss0, grad_out] = loss_fn(out);
  if (!std::isfinite(loss0)) throw std::runtime_error("grad_check: non-finite loss");
  const Batch<T> input_grad = net.backward(grad_out);
  net.freeze_dropout_masks(true);

  std::vector<std::pair<T*, double>> all;
  for (auto& p : net.params())
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
      all.emplace_back(p.value.data() + i, static_cast<double>(p.grad.data()[i]));

  Batch<T> probe = input;
  if (opt.include_input)
    for (Eigen::Index i = 0; i < probe.data.size(); ++i)
      all.emplace_back(probe.data.data() + i, static_cast<double>(input_grad.data.data()[i]));

  std::vector<std::pair<T*, double>> chosen;
  if (static_cast<int>(all.size()) <= opt.min_coordinates) {
    chosen = all;
  } else {
    Rng rng(opt.seed);
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int i = 0; i < opt.min_coordinates; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + rng() % (order.size() - static_cast<std::size_t>(i));
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
      chosen.push_back(all[order[static_cast<std::size_t>(i)]]);
    }
  }

  const auto eval = [&]() { return loss_fn(net.forward(probe, true)).first; };
  auto res = finite_difference_check<T>(eval, chosen, opt);
  net.freeze_dropout_masks(false);
  return res;
}

}  // namespace ris::diffkit
