#pragma once

// Finite-difference checks of every layer type, both scheme networks and the
// relaxed selection path, at reduced scale.

#include <functional>
#include <string>
#include <vector>

#include "ris/beamsearch.hpp"
#include "ris/diffkit/grad_check.hpp"
#include "ris/extrapolation.hpp"
#include "ris/selection.hpp"

namespace ris::harness {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  int coordinates = 0;
};

struct GradCheckScale {
  int n_v = 4;
  int n_h = 4;
  int k = 16;
  int classes = 64;
};

namespace detail {

inline diffkit::Batch<double> random_batch(int count, diffkit::Shape s, Rng& rng, double sd = 1.0) {
  diffkit::Batch<double> b(count, s);
  for (Eigen::Index i = 0; i < b.data.size(); ++i) b.data.data()[i] = sd * standard_normal(rng);
  return b;
}

inline std::vector<int> random_labels(int count, int classes, Rng& rng) {
  std::vector<int> y;
  for (int i = 0; i < count; ++i) y.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(classes)));
  return y;
}

inline diffkit::LossFn<double> mse_against(diffkit::Batch<double> target) {
  return [target](const diffkit::Batch<double>& y) { return extrapolation::mse_loss(y, target); };
}

}  // namespace detail

/// Perturbs the biases away from zero so they do not hide errors in the
/// bias path (freshly built networks start with zero biases).
inline void jitter_params(diffkit::Network<double>& net, Rng& rng, double sd = 0.1) {
  for (auto& p : net.params())
    if (p.name.ends_with(".bias"))
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = sd * standard_normal(rng);
}

inline GradCheckEntry check_network(const std::string& name, diffkit::NetworkSpec spec, int batch,
                                    const std::function<diffkit::LossFn<double>(const diffkit::Shape&, Rng&)>& make_loss,
                                    std::uint64_t seed, bool include_input) {
  Rng rng(seed);
  diffkit::Network<double> net(std::move(spec), mix_seed(seed, 1));
  jitter_params(net, rng);
  const auto x = detail::random_batch(batch, net.spec().input, rng);
  const auto loss = make_loss(net.spec().output(), rng);
  diffkit::GradCheckOptions opt;
  opt.seed = mix_seed(seed, 2);
  opt.include_input = include_input;
  const auto r = diffkit::grad_check(net, loss, x, opt);
  return {name, r.max_rel_error, r.coordinates};
}

/// Differentiates L(net(relaxed_fill(Z, soft(Xi)))) + rho L_s(Xi) with
/// respect to the logits Xi, noise and exclusion held fixed. The analytic side
/// is the same chain the training step uses: network input gradient, then
/// grad_wrt_rows, selection_backward and the entropy gradient.
inline GradCheckEntry check_selection_path(const std::string& name, diffkit::NetworkSpec spec,
                                           const std::function<diffkit::LossFn<double>(const diffkit::Shape&, Rng&)>& make_loss,
                                           int m, std::uint64_t seed, double rho = 1e-2, double tau = 0.7) {
  Rng rng(seed);
  diffkit::Network<double> net(std::move(spec), mix_seed(seed, 1));
  jitter_params(net, rng);
  net.reseed_dropout(mix_seed(seed, 3));
  const int n = net.spec().input.height;
  const auto z = detail::random_batch(2, net.spec().input, rng);
  const auto loss = make_loss(net.spec().output(), rng);
  selection::SelectionState state = selection::init_state(m, n, mix_seed(seed, 4), 0.5, tau);
  selection::RelaxedSample sample = selection::sample_selection(state, rng);

  // analytic
  net.freeze_dropout_masks(false);
  const auto out = net.forward(selection::relaxed_fill(z, sample), true);
  net.freeze_dropout_masks(true);
  const auto grad_out = loss(out).second;
  const auto grad_zbar = net.backward(grad_out);
  const RowMatrix grad_rows = selection::grad_wrt_rows(grad_zbar, z, sample.hard);
  const RowMatrix grad_xi =
      selection::selection_backward(grad_rows, sample) + rho * selection::entropy_penalty_grad(state.logits);

  RowMatrix logits = state.logits;
  const auto eval = [&]() {
    selection::RelaxedSample probe = sample;
    probe.soft = selection::relaxed_rows(logits, sample);
    return loss(net.forward(selection::relaxed_fill(z, probe), true)).first + rho * selection::entropy_penalty(logits);
  };
  std::vector<std::pair<double*, double>> slots;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (sample.available.data()[i] > 0.0) slots.emplace_back(logits.data() + i, grad_xi.data()[i]);
  const auto r = diffkit::finite_difference_check<double>(eval, slots, {});
  net.freeze_dropout_masks(false);
  return {name, r.max_rel_error, r.coordinates};
}

/// Every check of the suite; the pass threshold is up to the caller.
inline std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckScale& s = {}, std::uint64_t seed = 7) {
  using diffkit::LayerSpec;
  using diffkit::NetworkSpec;
  using diffkit::Shape;
  const auto mse = [](const Shape& out, Rng& rng) { return detail::mse_against(detail::random_batch(3, out, rng)); };
  const auto mse2 = [](const Shape& out, Rng& rng) { return detail::mse_against(detail::random_batch(2, out, rng)); };
  const auto ce = [](int batch) {
    return [batch](const Shape& out, Rng& rng) {
      const auto y = detail::random_labels(batch, out.channels, rng);
      return diffkit::LossFn<double>([y](const diffkit::Batch<double>& p) { return beamsearch::cross_entropy(p, y); });
    };
  };

  std::vector<GradCheckEntry> out;
  std::uint64_t id = seed;
  const auto add = [&](const std::string& name, NetworkSpec spec, bool include_input, auto make_loss) {
    out.push_back(check_network(name, std::move(spec), 3, make_loss, ++id, include_input));
  };

  add("conv2d", NetworkSpec{{5, 6, 3}, {LayerSpec::conv2d(3, 4)}}, true, mse);
  add("dense", NetworkSpec{{2, 3, 2}, {LayerSpec::flatten(), LayerSpec::dense(12, 5)}}, true, mse);
  add("relu", NetworkSpec{{3, 4, 2}, {LayerSpec::relu()}}, true, mse);
  add("leaky_relu", NetworkSpec{{3, 4, 2}, {LayerSpec::leaky_relu(0.2)}}, true, mse);
  add("softmax", NetworkSpec{{1, 1, 7}, {LayerSpec::flatten(), LayerSpec::softmax()}}, true, ce(3));
  add("dropout", NetworkSpec{{3, 4, 2}, {LayerSpec::flatten(), LayerSpec::dropout(0.5)}}, true, mse);
  add("flatten", NetworkSpec{{3, 4, 2}, {LayerSpec::flatten(), LayerSpec::dense(24, 3)}}, true, mse);
  add("residual",
      NetworkSpec{{4, 5, 3},
                  {LayerSpec::residual_begin(), LayerSpec::conv2d(3, 6), LayerSpec::relu(), LayerSpec::conv2d(6, 3),
                   LayerSpec::residual_end()}},
      true, mse);

  const int n = s.n_v * s.n_h;
  add("extrapolation_network", extrapolation::build_extrap_net({2, 2, 8}, n, s.k), true, mse);
  add("beam_network", beamsearch::build_beam_net(n, s.k, {64, 32, 32, 16}, s.classes), true, ce(3));

  out.push_back(check_selection_path("selection_extrapolation", extrapolation::build_extrap_net({1, 1, 4}, n, s.k), mse2,
                                     n / 4, ++id));
  out.push_back(check_selection_path("selection_beam", beamsearch::build_beam_net(n, s.k, {32, 16}, s.classes), ce(2),
                                     n / 4, ++id));
  return out;
}

}  // namespace ris::harness
