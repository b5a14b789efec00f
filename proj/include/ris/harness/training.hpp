#pragma once

// Joint training of the selection logits and a scheme network: per iteration
// a mini-batch, one Gumbel-Max draw of S, sub-sampling plus zero-filling,
// network forward/backward, straight-through gradient to the logits and two
// Adam groups. Also the run directory layout written after training.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/beamsearch.hpp"
#include "ris/diffkit/adam.hpp"
#include "ris/diffkit/checkpoint.hpp"
#include "ris/diffkit/network.hpp"
#include "ris/extrapolation.hpp"
#include "ris/harness/dataset.hpp"
#include "ris/harness/labels.hpp"
#include "ris/harness/train_config.hpp"
#include "ris/random.hpp"
#include "ris/selection.hpp"

namespace ris::harness {

using diffkit::Batch;
using diffkit::Mat;
using diffkit::Shape;

// Stream ids for mix_seed(config.seed, ...).
namespace streams {
inline constexpr std::uint64_t batches = 1;
inline constexpr std::uint64_t gumbel = 2;
inline constexpr std::uint64_t train_noise = 3;
inline constexpr std::uint64_t net_init = 4;
inline constexpr std::uint64_t logits_init = 5;
inline constexpr std::uint64_t eval_noise = 6;
inline constexpr std::uint64_t dropout = 7;
}  // namespace streams

/// Subcarrier columns fed to the network and the columns it must predict.
struct Window {
  int width = 0;
  int input_offset = 0;
  int target_offset = 0;
};

inline Window resolve_window(const TrainConfig& c, int k) {
  Window w;
  w.target_offset = c.subcarrier_gap;
  w.width = c.subcarrier_window > 0 ? c.subcarrier_window : k - c.subcarrier_gap;
  if (w.width < 1 || w.target_offset + w.width > k)
    throw std::invalid_argument("subcarrier window " + std::to_string(w.width) + " with gap " +
                                std::to_string(c.subcarrier_gap) + " does not fit K = " + std::to_string(k));
  return w;
}

inline double resolve_input_scale(const TrainConfig& c, int k) {
  return c.input_scale > 0.0 ? c.input_scale : std::sqrt(static_cast<double>(k));
}

/// Scaled network inputs and targets for a list of samples.
template <class T>
struct Prepared {
  Shape shape;
  std::vector<int> ids;
  Mat<T> inputs;   // count * pixels x 4
  Mat<T> targets;  // same layout; extrapolation only
  std::vector<int> labels;  // beam only

  int count() const { return static_cast<int>(ids.size()); }

  Batch<T> gather(const Mat<T>& src, const std::vector<int>& rows) const {
    Batch<T> b(static_cast<int>(rows.size()), shape);
    const Eigen::Index per = shape.pixels();
    for (std::size_t i = 0; i < rows.size(); ++i)
      b.data.middleRows(static_cast<Eigen::Index>(i) * per, per) = src.middleRows(rows[i] * per, per);
    return b;
  }
  Batch<T> input_batch(const std::vector<int>& rows) const { return gather(inputs, rows); }
  Batch<T> target_batch(const std::vector<int>& rows) const { return gather(targets, rows); }
  std::vector<int> label_batch(const std::vector<int>& rows) const {
    std::vector<int> out;
    for (int r : rows) out.push_back(labels.at(static_cast<std::size_t>(r)));
    return out;
  }
};

namespace detail {

template <class T>
void put_tensor(Mat<T>& dst, int slot, const CMatrix& h, const CMatrix& g, int offset, int width, double scale) {
  const int n = static_cast<int>(h.rows());
  const Eigen::Index base = static_cast<Eigen::Index>(slot) * n * width;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < width; ++c) {
      const Eigen::Index row = base + static_cast<Eigen::Index>(r) * width + c;
      dst(row, 0) = static_cast<T>(scale * h(r, offset + c).real());
      dst(row, 1) = static_cast<T>(scale * h(r, offset + c).imag());
      dst(row, 2) = static_cast<T>(scale * g(r, offset + c).real());
      dst(row, 3) = static_cast<T>(scale * g(r, offset + c).imag());
    }
}

}  // namespace detail

template <class T>
Prepared<T> prepare(const Dataset& d, const TrainConfig& c, const std::vector<int>& ids, const LabelSet* labels) {
  const Window w = resolve_window(c, d.k());
  const double scale = resolve_input_scale(c, d.k());
  Prepared<T> p;
  p.shape = {d.n(), w.width, 4};
  p.ids = ids;
  const Eigen::Index rows = static_cast<Eigen::Index>(ids.size()) * p.shape.pixels();
  p.inputs = Mat<T>::Zero(rows, 4);
  if (c.scheme == Scheme::extrapolation) p.targets = Mat<T>::Zero(rows, 4);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Sample& s = d.samples.at(static_cast<std::size_t>(ids[i]));
    const CMatrix& in_h = c.cross_frequency ? s.h_a : s.h;
    const CMatrix& in_g = c.cross_frequency ? s.g_a : s.g;
    detail::put_tensor(p.inputs, static_cast<int>(i), in_h, in_g, w.input_offset, w.width, scale);
    if (c.scheme == Scheme::extrapolation)
      detail::put_tensor(p.targets, static_cast<int>(i), s.h, s.g, w.target_offset, w.width, scale);
    if (labels != nullptr) p.labels.push_back(labels->labels.at(static_cast<std::size_t>(ids[i])));
  }
  return p;
}

/// Complex AWGN on each sample's H and G slices at the given per-entry SNR.
template <class T>
void add_awgn(Batch<T>& b, double snr_db, Rng& rng) {
  const Eigen::Index per = b.shape.pixels();
  for (int s = 0; s < b.count; ++s) {
    auto block = b.data.middleRows(static_cast<Eigen::Index>(s) * per, per);
    for (int pair = 0; pair < 2; ++pair) {
      const double power = block.template middleCols<2>(2 * pair).template cast<double>().squaredNorm() / static_cast<double>(per);
      const double sd = std::sqrt(power / std::pow(10.0, snr_db / 10.0) / 2.0);
      for (Eigen::Index r = 0; r < per; ++r)
        for (int ch = 2 * pair; ch < 2 * pair + 2; ++ch) block(r, ch) += static_cast<T>(sd * standard_normal(rng));
    }
  }
}

struct MetricsRow {
  double epoch = 0.0;
  std::string split;
  double loss = 0.0;     // L_c or L_b
  double loss_s = 0.0;   // entropy penalty (prob only)
  double rho = 0.0;
  double tau = 0.0;
  double metric = 0.0;   // NMSE or top-1 accuracy
};

struct TrainReport {
  TrainConfig config;
  std::string dataset_hash;
  std::string config_hash;
  int n = 0;
  int m = 0;
  Window window;
  double input_scale = 1.0;
  int n_train = 0;
  int n_test = 0;
  std::vector<MetricsRow> rows;
  std::vector<double> tau_log;  // per iteration
  long selection_checks = 0;
  long selection_violations = 0;
  selection::SubsampleMatrix pattern;
  double initial_test_metric = 0.0;
  double final_test_metric = 0.0;
  double final_test_loss = 0.0;
  std::optional<LabelSet> labels;  // metadata only; label vector cleared

  std::string metric_name() const { return config.scheme == Scheme::extrapolation ? "nmse" : "accuracy"; }
  std::string loss_name() const { return config.scheme == Scheme::extrapolation ? "loss_c" : "loss_b"; }
};

template <class T>
struct TrainedModel {
  diffkit::Network<T> net;
  selection::SelectionState state;
  TrainReport report;
};

inline diffkit::NetworkSpec network_for(const TrainConfig& c, int n, int width, int classes) {
  if (c.scheme == Scheme::extrapolation)
    return extrapolation::build_extrap_net({c.n_p, c.n_q, c.conv_width}, n, width);
  return beamsearch::build_beam_net(n, width, c.hidden, classes, c.dropout, c.leaky_alpha);
}

struct SplitScore {
  double loss = 0.0;
  double metric = 0.0;
};

/// Loss and metric over a prepared split with a fixed pattern (eval mode).
template <class T>
SplitScore score_split(diffkit::Network<T>& net, const Prepared<T>& data, const std::vector<int>& pattern,
                       const TrainConfig& c, int chunk = 64) {
  std::optional<Rng> noise;
  if (c.input_snr_db) noise.emplace(mix_seed(c.seed, streams::eval_noise));
  double loss = 0.0, metric = 0.0;
  for (int start = 0; start < data.count(); start += chunk) {
    std::vector<int> rows;
    for (int i = start; i < std::min(data.count(), start + chunk); ++i) rows.push_back(i);
    Batch<T> x = data.input_batch(rows);
    if (noise) add_awgn(x, *c.input_snr_db, *noise);
    const Batch<T> out = net.forward(selection::mask_rows(x, pattern), false);
    const double w = static_cast<double>(rows.size());
    if (c.scheme == Scheme::extrapolation) {
      const Batch<T> target = data.target_batch(rows);
      loss += w * extrapolation::mse_loss(out, target).first;
      metric += w * extrapolation::batch_nmse(out, target);
    } else {
      const auto labels = data.label_batch(rows);
      loss += w * beamsearch::cross_entropy(out, labels).first;
      for (std::size_t i = 0; i < rows.size(); ++i)
        metric += beamsearch::argmax_row(out, static_cast<int>(i)) == labels[i] ? 1.0 : 0.0;
    }
  }
  return {loss / data.count(), metric / data.count()};
}

/// Draws `count` distinct positions of [0, n) (partial Fisher-Yates).
inline std::vector<int> draw_batch(int n, int count, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng() % static_cast<std::uint64_t>(n - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

/// Runs the full loop. `log`, when given, receives one progress line per
/// logging interval.
template <class T>
TrainedModel<T> train(const Dataset& d, const LabelSet* labels, const TrainConfig& c, std::ostream* log = nullptr) {
  c.validate();
  const int n = d.n();
  const int m = c.m_for(n);
  int classes = 0;
  if (c.scheme == Scheme::beam) {
    if (labels == nullptr) throw std::invalid_argument("beam training needs labels");
    check_labels_match(*labels, d);
    classes = labels->classes;
    if (c.subcarrier_window != 0 || c.subcarrier_gap != 0)
      throw std::invalid_argument("beam training uses every subcarrier; window/gap must be 0");
  }
  if (static_cast<int>(d.train_indices.size()) < c.batch)
    throw std::invalid_argument("dataset too small for batch: " + std::to_string(d.train_indices.size()) +
                                " training samples, batch " + std::to_string(c.batch));

  const Prepared<T> train_set = prepare<T>(d, c, d.train_indices, labels);
  const Prepared<T> test_set = prepare<T>(d, c, d.test_indices, labels);

  TrainReport rep;
  rep.config = c;
  rep.dataset_hash = d.hash;
  rep.config_hash = config_hash(c);
  rep.n = n;
  rep.m = m;
  rep.window = resolve_window(c, d.k());
  rep.input_scale = resolve_input_scale(c, d.k());
  rep.n_train = train_set.count();
  rep.n_test = test_set.count();
  if (labels != nullptr) {
    rep.labels = *labels;
    rep.labels->labels.clear();
  }

  diffkit::Network<T> net(network_for(c, n, rep.window.width, classes), mix_seed(c.seed, streams::net_init));
  selection::SelectionState state =
      selection::init_state(m, n, mix_seed(c.seed, streams::logits_init), c.logit_init_variance, c.tau_start);
  diffkit::ParamStore<double> xi;
  xi.add("logits", m, n).value = state.logits;

  const bool learn_pattern = c.strategy == Strategy::prob;
  const selection::SubsampleMatrix uniform = selection::uniform_pattern(n, m);
  const auto current_pattern = [&] { return learn_pattern ? selection::extract_pattern(state.logits) : uniform; };

  Rng batch_rng(mix_seed(c.seed, streams::batches));
  Rng gumbel_rng(mix_seed(c.seed, streams::gumbel));
  Rng noise_rng(mix_seed(c.seed, streams::train_noise));
  const diffkit::AdamConfig adam_omega{c.lr_omega};
  const diffkit::AdamConfig adam_xi{c.lr_xi};

  const auto epoch_of = [&](long it) { return static_cast<double>(it) * c.batch / rep.n_train; };
  const auto entropy = [&] { return learn_pattern ? selection::entropy_penalty(state.logits) : 0.0; };

  {
    const SplitScore s0 = score_split(net, test_set, current_pattern().indices, c);
    rep.initial_test_metric = s0.metric;
    rep.rows.push_back({0.0, "test", s0.loss, entropy(), c.rho, c.tau_start, s0.metric});
  }

  double acc_loss = 0.0, acc_metric = 0.0;
  long acc_count = 0;
  const long interval = c.eval_interval();
  for (long it = 1; it <= c.iterations; ++it) {
    state.tau = selection::tau_at(it, c.iterations, c.tau_start, c.tau_end);
    rep.tau_log.push_back(state.tau);

    const std::vector<int> rows = draw_batch(train_set.count(), c.batch, batch_rng);
    Batch<T> x = train_set.input_batch(rows);
    if (c.input_snr_db) add_awgn(x, *c.input_snr_db, noise_rng);

    std::optional<selection::RelaxedSample> sample;
    if (learn_pattern) {
      sample = selection::sample_selection(state, gumbel_rng);
      ++rep.selection_checks;
      if (sample->hard.m() != m || !sample->hard.valid()) {
        ++rep.selection_violations;
        throw std::logic_error("sampled sub-sampling matrix is not a valid selection at iteration " + std::to_string(it));
      }
    }
    const std::vector<int>& picked = learn_pattern ? sample->hard.indices : uniform.indices;

    net.reseed_dropout(mix_seed(mix_seed(c.seed, streams::dropout), static_cast<std::uint64_t>(it)));
    net.zero_grad();
    const Batch<T> out = net.forward(selection::mask_rows(x, picked), true);
    double loss = 0.0, metric = 0.0;
    Batch<T> grad;
    if (c.scheme == Scheme::extrapolation) {
      const Batch<T> target = train_set.target_batch(rows);
      auto [l, g] = extrapolation::mse_loss(out, target);
      loss = l;
      grad = std::move(g);
      metric = extrapolation::batch_nmse(out, target);
    } else {
      const auto y = train_set.label_batch(rows);
      auto [l, g] = beamsearch::cross_entropy(out, y);
      loss = l;
      grad = std::move(g);
      for (std::size_t i = 0; i < y.size(); ++i) metric += beamsearch::argmax_row(out, static_cast<int>(i)) == y[i] ? 1.0 : 0.0;
      metric /= static_cast<double>(y.size());
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss at iteration " + std::to_string(it));
    const Batch<T> grad_zbar = net.backward(grad);

    if (learn_pattern) {
      const RowMatrix grad_rows = selection::grad_wrt_rows(grad_zbar, x, sample->hard);
      xi[0].grad = selection::selection_backward(grad_rows, *sample);
      if (c.rho > 0.0) xi[0].grad += c.rho * selection::entropy_penalty_grad(state.logits);
      diffkit::adam_step(xi, adam_xi);
      state.logits = xi[0].value;
    }
    diffkit::adam_step(net.params(), adam_omega);

    acc_loss += loss;
    acc_metric += metric;
    ++acc_count;
    if (it % interval == 0 || it == c.iterations) {
      const double epoch = epoch_of(it);
      rep.rows.push_back({epoch, "train", acc_loss / acc_count, entropy(), c.rho, state.tau, acc_metric / acc_count});
      const SplitScore s = score_split(net, test_set, current_pattern().indices, c);
      rep.rows.push_back({epoch, "test", s.loss, entropy(), c.rho, state.tau, s.metric});
      rep.final_test_metric = s.metric;
      rep.final_test_loss = s.loss;
      if (log != nullptr)
        *log << to_string(c.scheme) << " " << to_string(c.strategy) << " r=" << io::fmt_num(c.r) << " it " << it << "/"
             << c.iterations << " train " << rep.loss_name() << "=" << io::fmt_num(acc_loss / acc_count) << " test "
             << rep.metric_name() << "=" << io::fmt_num(s.metric) << std::endl;
      acc_loss = acc_metric = 0.0;
      acc_count = 0;
    }
  }
  rep.pattern = current_pattern();
  return {std::move(net), std::move(state), std::move(rep)};
}

// ---------------------------------------------------------------- persistence

inline std::string metrics_header(Scheme s) {
  return s == Scheme::extrapolation ? "epoch,split,loss_c,loss_s,rho,tau,nmse,r,strategy,seed,config_hash"
                                    : "epoch,split,loss_b,loss_s,rho,tau,accuracy,r,strategy,seed,config_hash";
}

inline std::string metrics_csv(const TrainReport& rep) {
  std::ostringstream os;
  os << metrics_header(rep.config.scheme) << '\n';
  for (const auto& r : rep.rows)
    os << io::fmt_num(r.epoch) << ',' << r.split << ',' << io::fmt_num(r.loss) << ',' << io::fmt_num(r.loss_s) << ','
       << io::fmt_num(r.rho) << ',' << io::fmt_num(r.tau) << ',' << io::fmt_num(r.metric) << ',' << io::fmt_num(rep.config.r)
       << ',' << to_string(rep.config.strategy) << ',' << rep.config.seed << ',' << rep.config_hash << '\n';
  return os.str();
}

inline json run_config_json(const TrainReport& rep) {
  json derived = {{"n", rep.n},
                  {"m", rep.m},
                  {"window", rep.window.width},
                  {"input_offset", rep.window.input_offset},
                  {"target_offset", rep.window.target_offset},
                  {"input_scale", rep.input_scale},
                  {"n_train", rep.n_train},
                  {"n_test", rep.n_test},
                  {"epochs", static_cast<double>(rep.config.iterations) * rep.config.batch / rep.n_train},
                  {"dataset_hash", rep.dataset_hash},
                  {"config_hash", rep.config_hash}};
  if (rep.labels)
    derived["labels"] = {{"dataset_hash", rep.labels->dataset_hash},
                         {"codebook_r1", rep.labels->codebook_r1},
                         {"codebook_r2", rep.labels->codebook_r2},
                         {"sigma2", rep.labels->sigma2},
                         {"classes", rep.labels->classes}};
  return {{"config", to_json(rep.config)}, {"derived", derived}};
}

/// Writes config.json, metrics.csv, model.ckpt, selection.json,
/// pattern.json and report.json into `dir`. Every file is a pure function of
/// config, seed and dataset.
template <class T>
void write_run(const std::filesystem::path& dir, const TrainedModel<T>& model, const ArrayGeometry& geometry) {
  const TrainReport& rep = model.report;
  std::filesystem::create_directories(dir);
  io::write_json(dir / "config.json", run_config_json(rep));
  {
    auto os = io::open_out(dir / "metrics.csv");
    os << metrics_csv(rep);
  }
  diffkit::save_checkpoint(dir / "model.ckpt", model.net, json{{"config_hash", rep.config_hash}});
  json logits = json::array();
  for (Eigen::Index r = 0; r < model.state.logits.rows(); ++r) {
    std::vector<double> row(model.state.logits.row(r).data(), model.state.logits.row(r).data() + model.state.logits.cols());
    logits.push_back(row);
  }
  io::write_json(dir / "selection.json", {{"strategy", to_string(rep.config.strategy)},
                                          {"tau", model.state.tau},
                                          {"logits", logits},
                                          {"indices", rep.pattern.indices}});
  io::write_json(dir / "pattern.json", selection::pattern_json(geometry, rep.pattern));
  io::write_json(dir / "report.json", {{"selection_checks", rep.selection_checks},
                                       {"selection_violations", rep.selection_violations},
                                       {"metric", rep.metric_name()},
                                       {"initial_test_metric", rep.initial_test_metric},
                                       {"final_test_metric", rep.final_test_metric},
                                       {"final_test_loss", rep.final_test_loss},
                                       {"dataset_hash", rep.dataset_hash},
                                       {"config_hash", rep.config_hash}});
}

/// Trains in the configured precision and writes the run directory.
inline TrainReport train_and_write(const Dataset& d, const LabelSet* labels, const TrainConfig& c,
                                   const std::filesystem::path& dir, std::ostream* log = nullptr) {
  if (c.precision == "float") {
    auto model = train<float>(d, labels, c, log);
    write_run(dir, model, d.config.geometry());
    return model.report;
  }
  auto model = train<double>(d, labels, c, log);
  write_run(dir, model, d.config.geometry());
  return model.report;
}

}  // namespace ris::harness
