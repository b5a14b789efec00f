#pragma once

// Training configuration shared by both schemes, its JSON form and checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/io.hpp"

namespace ris::harness {

using io::json;

enum class Scheme { extrapolation, beam };
enum class Strategy { prob, unif };

inline std::string to_string(Scheme s) { return s == Scheme::extrapolation ? "extrapolation" : "beam"; }
inline std::string to_string(Strategy s) { return s == Strategy::prob ? "prob" : "unif"; }

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "extrapolation" || s == "extrap") return Scheme::extrapolation;
  if (s == "beam") return Scheme::beam;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "prob") return Strategy::prob;
  if (s == "unif") return Strategy::unif;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct TrainConfig {
  Scheme scheme = Scheme::extrapolation;
  double r = 0.125;
  Strategy strategy = Strategy::prob;
  double lr_xi = 1e-3;
  double lr_omega = 1e-4;
  double rho = 1e-4;
  double tau_start = 5.0;
  double tau_end = 0.5;
  int batch = 16;
  long iterations = 1000;
  std::uint64_t seed = 1;
  std::string precision = "double";

  // logging
  long eval_every = 0;  // 0: iterations / 20

  // selection
  double logit_init_variance = 0.05;

  // data handling
  bool cross_frequency = true;   // input at f_a, target at f_c
  double input_scale = 0.0;      // 0: sqrt(K)
  std::optional<double> input_snr_db;  // AWGN on the sensed rows
  int subcarrier_window = 0;     // 0: all K
  int subcarrier_gap = 0;        // target window offset

  // extrapolation network
  int n_p = 5;
  int n_q = 6;
  int conv_width = 64;

  // beam network
  std::vector<int> hidden{16384, 4096, 4096, 2048};
  double dropout = 0.5;
  double leaky_alpha = 0.2;

  double nu() const { return lr_xi / lr_omega; }

  int m_for(int n) const {
    const double m = r * n;
    const long rounded = std::lround(m);
    if (std::abs(m - static_cast<double>(rounded)) > 1e-9 || rounded < 1 || rounded > n)
      throw std::invalid_argument("r*N = " + io::fmt_num(m) + " is not an integer in [1, N]");
    return static_cast<int>(rounded);
  }

  long eval_interval() const { return eval_every > 0 ? eval_every : std::max(1L, iterations / 20); }

  void validate() const {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("r must lie in (0, 1]");
    if (!(lr_omega > 0.0) || !(lr_xi > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    if (nu() < 1.0 - 1e-12) throw std::invalid_argument("nu = lr_xi / lr_omega must be >= 1");
    if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
    if (!(tau_end > 0.0) || tau_start < tau_end) throw std::invalid_argument("need tau_start >= tau_end > 0");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (precision != "double" && precision != "float") throw std::invalid_argument("precision must be double or float");
    if (!(logit_init_variance >= 0.0)) throw std::invalid_argument("logit_init_variance must be >= 0");
    if (input_scale < 0.0) throw std::invalid_argument("input_scale must be >= 0");
    if (subcarrier_window < 0 || subcarrier_gap < 0) throw std::invalid_argument("subcarrier window/gap must be >= 0");
    if (n_p < 1 || n_q < 1 || conv_width < 1) throw std::invalid_argument("n_p, n_q, conv_width must be >= 1");
    if (hidden.empty()) throw std::invalid_argument("hidden must list at least one width");
    for (int w : hidden)
      if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  }
};

inline json to_json(const TrainConfig& c) {
  json j = {{"scheme", to_string(c.scheme)},
            {"r", c.r},
            {"strategy", to_string(c.strategy)},
            {"lr_xi", c.lr_xi},
            {"lr_omega", c.lr_omega},
            {"nu", c.nu()},
            {"rho", c.rho},
            {"tau_start", c.tau_start},
            {"tau_end", c.tau_end},
            {"batch", c.batch},
            {"iterations", c.iterations},
            {"seed", c.seed},
            {"precision", c.precision},
            {"eval_every", c.eval_every},
            {"logit_init_variance", c.logit_init_variance},
            {"cross_frequency", c.cross_frequency},
            {"input_scale", c.input_scale},
            {"input_snr_db", c.input_snr_db ? json(*c.input_snr_db) : json(nullptr)},
            {"subcarrier_window", c.subcarrier_window},
            {"subcarrier_gap", c.subcarrier_gap},
            {"n_p", c.n_p},
            {"n_q", c.n_q},
            {"conv_width", c.conv_width},
            {"hidden", c.hidden},
            {"dropout", c.dropout},
            {"leaky_alpha", c.leaky_alpha}};
  return j;
}

/// Unknown keys are rejected so typos do not silently fall back to defaults.
inline TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known{
      "scheme",     "r",          "strategy",   "lr_xi",      "lr_omega",  "nu",
      "rho",        "tau_start",  "tau_end",    "batch",      "iterations", "seed",
      "precision",  "eval_every", "logit_init_variance",        "cross_frequency",
      "input_scale", "input_snr_db", "subcarrier_window",      "subcarrier_gap",
      "n_p",        "n_q",        "conv_width", "hidden",     "dropout",   "leaky_alpha"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("unknown config key '" + key + "'");

  TrainConfig c;
  if (j.contains("scheme")) c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  if (j.contains("r")) c.r = j.at("r").is_string() ? io::parse_ratio(j.at("r").get<std::string>()) : j.at("r").get<double>();
  if (j.contains("strategy")) c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.lr_omega = j.value("lr_omega", c.lr_omega);
  c.lr_xi = j.value("lr_xi", c.lr_xi);
  // nu may stand in for lr_xi; if both are given they must agree
  if (j.contains("nu")) {
    const double nu = j.at("nu").get<double>();
    if (!j.contains("lr_xi")) c.lr_xi = nu * c.lr_omega;
    else if (std::abs(c.nu() - nu) > 1e-9 * std::max(1.0, nu)) throw std::invalid_argument("nu disagrees with lr_xi / lr_omega");
  }
  c.rho = j.value("rho", c.rho);
  c.tau_start = j.value("tau_start", c.tau_start);
  c.tau_end = j.value("tau_end", c.tau_end);
  c.batch = j.value("batch", c.batch);
  c.iterations = j.value("iterations", c.iterations);
  c.seed = j.value("seed", c.seed);
  c.precision = j.value("precision", c.precision);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.logit_init_variance = j.value("logit_init_variance", c.logit_init_variance);
  c.cross_frequency = j.value("cross_frequency", c.cross_frequency);
  c.input_scale = j.value("input_scale", c.input_scale);
  if (j.contains("input_snr_db") && !j.at("input_snr_db").is_null()) c.input_snr_db = j.at("input_snr_db").get<double>();
  c.subcarrier_window = j.value("subcarrier_window", c.subcarrier_window);
  c.subcarrier_gap = j.value("subcarrier_gap", c.subcarrier_gap);
  c.n_p = j.value("n_p", c.n_p);
  c.n_q = j.value("n_q", c.n_q);
  c.conv_width = j.value("conv_width", c.conv_width);
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  c.dropout = j.value("dropout", c.dropout);
  c.leaky_alpha = j.value("leaky_alpha", c.leaky_alpha);
  c.validate();
  return c;
}

inline constexpr const char* kSeedEnv = "RIS_SPARSE_SEED";

/// Reads a config file; RIS_SPARSE_SEED, when set, replaces the seed.
inline TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig c = train_config_from_json(io::read_json(path));
  if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(kSeedEnv) + " is not an unsigned integer: " + env);
    }
  }
  return c;
}

inline std::string config_hash(const TrainConfig& c) { return io::hash_string(to_json(c).dump()); }

}  // namespace ris::harness
