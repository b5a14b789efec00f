#pragma once

// Evaluation of trained run directories: NMSE versus r, NMSE versus
// subcarrier gap, training curves, pattern export and achievable rates.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/beamforming_eval.hpp"
#include "ris/harness/training.hpp"

namespace ris::harness {

struct LoadedModel {
  std::string name;
  std::filesystem::path dir;
  TrainConfig config;
  json derived;
  diffkit::Network<double> net;
  selection::SubsampleMatrix pattern;
};

inline bool is_run_dir(const std::filesystem::path& p) {
  return std::filesystem::is_regular_file(p / "config.json") && std::filesystem::is_regular_file(p / "model.ckpt");
}

inline LoadedModel load_model(const std::filesystem::path& dir) {
  const json cfg = io::read_json(dir / "config.json");
  const json sel = io::read_json(dir / "selection.json");
  LoadedModel m{dir.filename().string(), dir, train_config_from_json(cfg.at("config")), cfg.at("derived"),
                diffkit::load_checkpoint<double>(dir / "model.ckpt"), {}};
  m.pattern.n = m.derived.at("n").get<int>();
  m.pattern.indices = sel.at("indices").get<std::vector<int>>();
  if (!m.pattern.valid()) throw std::runtime_error("invalid pattern in " + (dir / "selection.json").string());
  return m;
}

/// `root` itself when it is a run directory, otherwise its run
/// subdirectories (recursively) in lexicographic order.
inline std::vector<LoadedModel> load_models(const std::filesystem::path& root) {
  if (is_run_dir(root)) {
    std::vector<LoadedModel> one;
    one.push_back(load_model(root));
    return one;
  }
  if (!std::filesystem::is_directory(root)) throw std::invalid_argument("no run directory at " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_directory() && is_run_dir(e.path())) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<LoadedModel> out;
  for (const auto& dir : dirs) {
    out.push_back(load_model(dir));
    out.back().name = std::filesystem::relative(dir, root).generic_string();
  }
  if (out.empty()) throw std::invalid_argument("no trained runs under " + root.string());
  return out;
}

inline void require_scheme(const LoadedModel& m, Scheme s, const std::string& mode) {
  if (m.config.scheme != s)
    throw std::invalid_argument("mode/model mismatch: mode '" + mode + "' needs " + to_string(s) + " models, " + m.name +
                                " is " + to_string(m.config.scheme));
}

inline void require_dataset(const LoadedModel& m, const Dataset& d) {
  if (m.derived.at("dataset_hash").get<std::string>() != d.hash)
    throw std::invalid_argument("model " + m.name + " was trained on dataset " +
                                m.derived.at("dataset_hash").get<std::string>() + ", got " + d.hash);
}

// ------------------------------------------------------------------- NMSE

struct NmseRow {
  std::string model;
  double r = 0.0;
  Strategy strategy = Strategy::prob;
  int m = 0;
  int gap = 0;
  double nmse = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Test-split NMSE of one extrapolation model, optionally at another gap.
inline NmseRow model_nmse(LoadedModel& m, const Dataset& d, std::optional<int> gap = std::nullopt) {
  require_scheme(m, Scheme::extrapolation, "nmse");
  require_dataset(m, d);
  TrainConfig c = m.config;
  if (gap) {
    c.subcarrier_window = m.derived.at("window").get<int>();
    c.subcarrier_gap = *gap;
  }
  const Prepared<double> test = prepare<double>(d, c, d.test_indices, nullptr);
  const SplitScore s = score_split(m.net, test, m.pattern.indices, c);
  return {m.name, c.r, c.strategy, m.pattern.m(), c.subcarrier_gap, s.metric, c.seed,
          m.derived.at("config_hash").get<std::string>()};
}

inline std::string nmse_vs_r_csv(const std::vector<NmseRow>& rows) {
  std::ostringstream os;
  os << "r,strategy,m,nmse,seed,config_hash,model\n";
  for (const auto& r : rows)
    os << io::fmt_num(r.r) << ',' << to_string(r.strategy) << ',' << r.m << ',' << io::fmt_num(r.nmse) << ',' << r.seed
       << ',' << r.config_hash << ',' << r.model << '\n';
  return os.str();
}

inline std::string nmse_vs_gap_csv(const std::vector<NmseRow>& rows) {
  std::ostringstream os;
  os << "gap,r,strategy,nmse,seed,config_hash,model\n";
  for (const auto& r : rows)
    os << r.gap << ',' << io::fmt_num(r.r) << ',' << to_string(r.strategy) << ',' << io::fmt_num(r.nmse) << ',' << r.seed
       << ',' << r.config_hash << ',' << r.model << '\n';
  return os.str();
}

// ----------------------------------------------------------------- curves

/// Concatenated metrics.csv files with a leading model column.
inline std::string loss_vs_epoch_csv(const std::vector<LoadedModel>& models) {
  std::ostringstream os;
  std::optional<Scheme> scheme;
  for (const auto& m : models) {
    if (scheme && *scheme != m.config.scheme)
      throw std::invalid_argument("mode/model mismatch: loss curves of both schemes cannot share one table");
    scheme = m.config.scheme;
    auto is = io::open_in(m.dir / "metrics.csv");
    std::string line;
    std::getline(is, line);
    if (m.name == models.front().name) os << "model," << line << '\n';
    while (std::getline(is, line))
      if (!line.empty()) os << m.name << ',' << line << '\n';
  }
  return os.str();
}

inline std::string pattern_csv(const std::vector<LoadedModel>& models, const ArrayGeometry& geometry) {
  std::ostringstream os;
  os << "model,scheme,strategy,r,m,n_v,n_h,indices\n";
  for (const auto& m : models) {
    os << m.name << ',' << to_string(m.config.scheme) << ',' << to_string(m.config.strategy) << ','
       << io::fmt_num(m.config.r) << ',' << m.pattern.m() << ',' << geometry.n_v << ',' << geometry.n_h << ',';
    for (std::size_t i = 0; i < m.pattern.indices.size(); ++i) os << (i ? " " : "") << m.pattern.indices[i];
    os << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------------ rates

struct RateOptions {
  std::optional<double> sigma2;  // overrides snr_db
  double snr_db = 30.0;
  int bits = 3;
  int codebook_r1 = 0;  // 0: from the model's labels, else 2
  int codebook_r2 = 0;

  double noise_var(const Dataset& d) const { return sigma2 ? *sigma2 : sigma2_from_snr_db(d.ref_power, snr_db); }
};

struct RateRow {
  int sample_id = 0;
  std::string model;
  double r = 0.0;
  Strategy strategy = Strategy::prob;
  Scheme scheme = Scheme::extrapolation;
  beamforming::RateReport report;
};

inline std::vector<RateRow> model_rates(LoadedModel& m, const Dataset& d, const RateOptions& opt) {
  require_dataset(m, d);
  const double sigma2 = opt.noise_var(d);
  int r1 = opt.codebook_r1, r2 = opt.codebook_r2;
  if (m.derived.contains("labels")) {
    if (r1 == 0) r1 = m.derived["labels"].at("codebook_r1").get<int>();
    if (r2 == 0) r2 = m.derived["labels"].at("codebook_r2").get<int>();
  }
  if (r1 == 0) r1 = 2;
  if (r2 == 0) r2 = 2;
  const auto codebook = beamsearch::build_codebook(d.config.geometry(), r1, r2);
  if (m.config.scheme == Scheme::beam && codebook.size() != m.net.spec().output().channels)
    throw std::invalid_argument("codebook size does not match the classifier of " + m.name);
  if (m.config.scheme == Scheme::extrapolation && m.derived.at("window").get<int>() != d.k())
    throw std::invalid_argument("rate evaluation needs a model predicting every subcarrier (" + m.name + ")");
  const beamforming::PhaseQuantizer q{opt.bits};
  q.validate();

  const double scale = m.derived.at("input_scale").get<double>();
  const Prepared<double> test = prepare<double>(d, m.config, d.test_indices, nullptr);
  std::optional<Rng> noise;
  if (m.config.input_snr_db) noise.emplace(mix_seed(m.config.seed, streams::eval_noise));
  std::vector<RateRow> rows;
  constexpr int chunk = 64;
  for (int start = 0; start < test.count(); start += chunk) {
    std::vector<int> idx;
    for (int i = start; i < std::min(test.count(), start + chunk); ++i) idx.push_back(i);
    Batch<double> x = test.input_batch(idx);
    if (noise) add_awgn(x, *m.config.input_snr_db, *noise);
    const Batch<double> out = m.net.forward(selection::mask_rows(x, m.pattern.indices), false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int id = test.ids[static_cast<std::size_t>(idx[i])];
      const Sample& s = d.samples.at(static_cast<std::size_t>(id));
      beamforming::SchemeInputs in;
      ChannelPair est;
      if (m.config.scheme == Scheme::extrapolation) {
        ChannelTensor t = extrapolation::from_batch(out, static_cast<int>(i));
        t.values /= scale;
        est = split_tensor(t);
        in.h_hat = &est.h;
        in.g_hat = &est.g;
      } else {
        in.predicted_label = beamsearch::argmax_row(out, static_cast<int>(i));
      }
      rows.push_back({id, m.name, m.config.r, m.config.strategy, m.config.scheme,
                      beamforming::scheme_rates(s.h, s.g, in, q, codebook, sigma2)});
    }
  }
  return rows;
}

inline std::string rate_csv(const std::vector<RateRow>& rows, int bits, double sigma2) {
  std::ostringstream os;
  os << beamforming::kRateCsvHeader << '\n';
  for (const auto& r : rows)
    os << beamforming::rate_csv_row(r.sample_id, r.r, to_string(r.strategy), to_string(r.scheme), r.report, bits, sigma2)
       << '\n';
  return os.str();
}

struct RateSummary {
  double r = 0.0;
  Strategy strategy = Strategy::prob;
  Scheme scheme = Scheme::extrapolation;
  double r_scheme = 0.0;  // mean R_ext or R_beam
  double r_ub_cont = 0.0;
  double r_ub_cb = 0.0;
  int samples = 0;
};

/// Means over consecutive rows of the same model.
inline std::vector<RateSummary> summarize_rates(const std::vector<RateRow>& rows) {
  std::vector<RateSummary> out;
  std::string current;
  for (const auto& row : rows) {
    if (out.empty() || row.model != current) {
      out.push_back({row.r, row.strategy, row.scheme});
      current = row.model;
    }
    auto& s = out.back();
    s.r_scheme += row.report.r_ext ? *row.report.r_ext : row.report.r_beam.value_or(0.0);
    s.r_ub_cont += row.report.r_ub_cont;
    s.r_ub_cb += row.report.r_ub_cb;
    ++s.samples;
  }
  for (auto& s : out) {
    s.r_scheme /= s.samples;
    s.r_ub_cont /= s.samples;
    s.r_ub_cb /= s.samples;
  }
  return out;
}

inline std::string rate_summary_csv(const std::vector<RateSummary>& rows) {
  std::ostringstream os;
  os << "r,strategy,scheme,R_scheme,R_ub_cont,R_ub_cb,samples\n";
  for (const auto& s : rows)
    os << io::fmt_num(s.r) << ',' << to_string(s.strategy) << ',' << to_string(s.scheme) << ',' << io::fmt_num(s.r_scheme)
       << ',' << io::fmt_num(s.r_ub_cont) << ',' << io::fmt_num(s.r_ub_cb) << ',' << s.samples << '\n';
  return os.str();
}

// ------------------------------------------------------------------ modes

enum class EvalMode { nmse_vs_r, gap, loss, pattern, rate };

inline EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "nmse_vs_r") return EvalMode::nmse_vs_r;
  if (s == "gap" || s == "nmse_vs_subcarrier_gap") return EvalMode::gap;
  if (s == "loss" || s == "loss_vs_epoch") return EvalMode::loss;
  if (s == "pattern" || s == "pattern_export") return EvalMode::pattern;
  if (s == "rate" || s == "rate_vs_r") return EvalMode::rate;
  throw std::invalid_argument("unknown eval mode '" + s + "'");
}

struct EvalOptions {
  EvalMode mode = EvalMode::nmse_vs_r;
  std::vector<int> gaps;  // gap mode; empty: each model's own gap
  RateOptions rate;
};

/// Runs one mode over every model and returns the CSV text.
inline std::string evaluate(std::vector<LoadedModel>& models, const Dataset& d, const EvalOptions& opt) {
  switch (opt.mode) {
    case EvalMode::nmse_vs_r: {
      std::vector<NmseRow> rows;
      for (auto& m : models) rows.push_back(model_nmse(m, d));
      std::stable_sort(rows.begin(), rows.end(), [](const NmseRow& a, const NmseRow& b) {
        return a.strategy != b.strategy ? a.strategy < b.strategy : a.r < b.r;
      });
      return nmse_vs_r_csv(rows);
    }
    case EvalMode::gap: {
      std::vector<NmseRow> rows;
      for (auto& m : models) {
        if (opt.gaps.empty()) rows.push_back(model_nmse(m, d));
        for (int g : opt.gaps) rows.push_back(model_nmse(m, d, g));
      }
      return nmse_vs_gap_csv(rows);
    }
    case EvalMode::loss: return loss_vs_epoch_csv(models);
    case EvalMode::pattern: return pattern_csv(models, d.config.geometry());
    case EvalMode::rate: {
      std::vector<RateRow> rows;
      for (auto& m : models) {
        auto part = model_rates(m, d, opt.rate);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      return rate_csv(rows, opt.rate.bits, opt.rate.noise_var(d));
    }
  }
  throw std::logic_error("unreachable eval mode");
}

}  // namespace ris::harness
