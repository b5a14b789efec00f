#pragma once

// Synthetic dataset of channel quadruples (H^a, G^a, H, G): generation, the
// float32 stream file and its JSON sidecar, and the train/test split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/channel_model.hpp"
#include "ris/io.hpp"
#include "ris/random.hpp"

namespace ris::harness {

using io::json;

struct Sector {
  double lo_deg = 0.0;
  double hi_deg = 0.0;
};

struct DatasetConfig {
  int n_v = 8;
  int n_h = 8;
  int k_subcarriers = 64;
  double f_a_hz = 2.4e9;
  double f_c_hz = 2.5e9;
  double bandwidth_hz = 100e6;
  double spacing_over_lambda = 0.5;
  int paths = 5;
  int sample_count = 40200;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  double power_decay = 1.0;
  double delay_fraction = 0.25;
  Sector h_elevation{30.0, 150.0};
  Sector h_azimuth{-90.0, 90.0};
  Sector g_elevation{30.0, 150.0};
  Sector g_azimuth{-90.0, 90.0};

  ArrayGeometry geometry() const { return {n_v, n_h, spacing_over_lambda}; }
  int n() const { return n_v * n_h; }

  OfdmGrid grid(double carrier_hz) const { return {k_subcarriers, 1.0 / bandwidth_hz, carrier_hz}; }

  static PathStatistics stats_for(double decay, double delay, Sector el, Sector az) {
    constexpr double deg = kPi / 180.0;
    return {decay, delay, el.lo_deg * deg, el.hi_deg * deg, az.lo_deg * deg, az.hi_deg * deg};
  }
  PathStatistics h_stats() const { return stats_for(power_decay, delay_fraction, h_elevation, h_azimuth); }
  PathStatistics g_stats() const { return stats_for(power_decay, delay_fraction, g_elevation, g_azimuth); }

  void validate() const {
    geometry().validate();
    if (k_subcarriers < 1 || paths < 1 || sample_count < 2) throw std::invalid_argument("dataset: K, paths >= 1 and sample_count >= 2 required");
    if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("dataset: bandwidth must be > 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("dataset: train_fraction must lie in (0, 1)");
    if (!(delay_fraction > 0.0 && delay_fraction <= 1.0)) throw std::invalid_argument("dataset: delay_fraction must lie in (0, 1]");
  }
};

inline json sector_json(Sector s) { return json::array({s.lo_deg, s.hi_deg}); }
inline Sector sector_from(const json& j, Sector fallback) {
  return j.is_array() ? Sector{j.at(0).get<double>(), j.at(1).get<double>()} : fallback;
}

inline DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  c.n_v = j.value("n_v", c.n_v);
  c.n_h = j.value("n_h", c.n_h);
  c.k_subcarriers = j.value("k_subcarriers", c.k_subcarriers);
  c.f_a_hz = j.value("f_a_hz", c.f_a_hz);
  c.f_c_hz = j.value("f_c_hz", c.f_c_hz);
  c.bandwidth_hz = j.value("bandwidth_hz", c.bandwidth_hz);
  c.spacing_over_lambda = j.value("spacing_over_lambda", c.spacing_over_lambda);
  c.paths = j.value("paths", c.paths);
  c.sample_count = j.value("sample_count", c.sample_count);
  c.seed = j.value("seed", c.seed);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.power_decay = j.value("power_decay", c.power_decay);
  c.delay_fraction = j.value("delay_fraction", c.delay_fraction);
  c.h_elevation = sector_from(j.value("h_elevation_deg", json()), c.h_elevation);
  c.h_azimuth = sector_from(j.value("h_azimuth_deg", json()), c.h_azimuth);
  c.g_elevation = sector_from(j.value("g_elevation_deg", json()), c.g_elevation);
  c.g_azimuth = sector_from(j.value("g_azimuth_deg", json()), c.g_azimuth);
  c.validate();
  return c;
}

inline json dataset_config_to_json(const DatasetConfig& c) {
  return {{"n_v", c.n_v},
          {"n_h", c.n_h},
          {"k_subcarriers", c.k_subcarriers},
          {"f_a_hz", c.f_a_hz},
          {"f_c_hz", c.f_c_hz},
          {"bandwidth_hz", c.bandwidth_hz},
          {"spacing_over_lambda", c.spacing_over_lambda},
          {"paths", c.paths},
          {"sample_count", c.sample_count},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"power_decay", c.power_decay},
          {"delay_fraction", c.delay_fraction},
          {"h_elevation_deg", sector_json(c.h_elevation)},
          {"h_azimuth_deg", sector_json(c.h_azimuth)},
          {"g_elevation_deg", sector_json(c.g_elevation)},
          {"g_azimuth_deg", sector_json(c.g_azimuth)}};
}

struct Sample {
  CMatrix h_a, g_a;  // estimation carrier f_a
  CMatrix h, g;      // data carrier f_c
};

struct Dataset {
  DatasetConfig config;
  std::vector<Sample> samples;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  std::string hash;  // of the data file
  double ref_power = 0.0;

  int n() const { return config.n(); }
  int k() const { return config.k_subcarriers; }
};

/// Mean over samples and subcarriers of ||g_k .* h_k||^2 at f_c; the
/// reference for SNR-defined noise variances.
inline double reference_power(const std::vector<Sample>& samples) {
  double sum = 0.0;
  long count = 0;
  for (const auto& s : samples) {
    sum += cascade(s.h, s.g).squaredNorm();
    count += s.h.cols();
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

inline double sigma2_from_snr_db(double ref_power, double snr_db) { return ref_power / std::pow(10.0, snr_db / 10.0); }

/// Shuffled 80/20-style split, each part sorted.
inline void make_split(int count, double train_fraction, std::uint64_t seed, std::vector<int>& train,
                       std::vector<int>& test) {
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5011));
  for (int i = count - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[rng() % static_cast<std::uint64_t>(i + 1)]);
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * count)), 1, count - 1);
  train.assign(order.begin(), order.begin() + n_train);
  test.assign(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

/// Sample i uses path sets seeded from seed + i; both carriers share them.
inline Sample generate_sample(const DatasetConfig& c, int index) {
  const std::uint64_t base = c.seed + static_cast<std::uint64_t>(index);
  const auto geometry = c.geometry();
  const auto grid_a = c.grid(c.f_a_hz);
  const auto grid_c = c.grid(c.f_c_hz);
  const PathSet ph = gen_pathset(c.paths, grid_c, mix_seed(base, 0), c.h_stats());
  const PathSet pg = gen_pathset(c.paths, grid_c, mix_seed(base, 1), c.g_stats());
  return {freq_channel(ph, geometry, grid_a), freq_channel(pg, geometry, grid_a), freq_channel(ph, geometry, grid_c),
          freq_channel(pg, geometry, grid_c)};
}

namespace detail {

inline void append_matrix(std::vector<float>& out, const CMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out.push_back(static_cast<float>(m(r, c).real()));
      out.push_back(static_cast<float>(m(r, c).imag()));
    }
}

inline CMatrix take_matrix(const std::vector<float>& in, std::size_t& pos, int n, int k) {
  CMatrix m(n, k);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) {
      m(r, c) = cplx(in[pos], in[pos + 1]);
      pos += 2;
    }
  return m;
}

}  // namespace detail

inline std::filesystem::path sidecar_path(const std::filesystem::path& data) {
  return std::filesystem::path(data.string() + ".json");
}

/// Writes `out_path` (float32 LE; per sample H^a, G^a, H, G as (re, im)
/// pairs row-major over (n, k)) and `out_path.json`. Samples are stored as
/// float32, so the returned dataset is re-read to match what consumers see.
inline Dataset write_dataset(const DatasetConfig& c, const std::filesystem::path& out_path) {
  c.validate();
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(c.sample_count) * 8u * static_cast<std::size_t>(c.n() * c.k_subcarriers));
  for (int i = 0; i < c.sample_count; ++i) {
    const Sample s = generate_sample(c, i);
    detail::append_matrix(values, s.h_a);
    detail::append_matrix(values, s.g_a);
    detail::append_matrix(values, s.h);
    detail::append_matrix(values, s.g);
  }
  {
    auto os = io::open_out(out_path, true);
    for (float v : values) io::write_le<float>(os, v);
    if (!os) throw std::runtime_error("failed writing " + out_path.string());
  }
  Dataset d;
  d.config = c;
  d.hash = io::hash_file(out_path);
  std::size_t pos = 0;
  for (int i = 0; i < c.sample_count; ++i) {
    Sample s;
    s.h_a = detail::take_matrix(values, pos, c.n(), c.k_subcarriers);
    s.g_a = detail::take_matrix(values, pos, c.n(), c.k_subcarriers);
    s.h = detail::take_matrix(values, pos, c.n(), c.k_subcarriers);
    s.g = detail::take_matrix(values, pos, c.n(), c.k_subcarriers);
    d.samples.push_back(std::move(s));
  }
  make_split(c.sample_count, c.train_fraction, c.seed, d.train_indices, d.test_indices);
  d.ref_power = reference_power(d.samples);

  json side = dataset_config_to_json(c);
  side["format_version"] = 1;
  side["data_file"] = out_path.filename().string();
  side["data_hash"] = d.hash;
  side["ref_power"] = d.ref_power;
  side["train_indices"] = d.train_indices;
  side["test_indices"] = d.test_indices;
  io::write_json(sidecar_path(out_path), side);
  return d;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  const json side = io::read_json(sidecar_path(path));
  if (side.at("format_version").get<int>() != 1) throw std::runtime_error("unsupported dataset format version");
  Dataset d;
  d.config = dataset_config_from_json(side);
  d.hash = io::hash_file(path);
  if (side.contains("data_hash") && side.at("data_hash").get<std::string>() != d.hash)
    throw std::runtime_error("dataset file does not match its sidecar hash");
  const std::size_t per_sample = 8u * static_cast<std::size_t>(d.n() * d.k());
  const std::size_t expected = per_sample * static_cast<std::size_t>(d.config.sample_count);
  if (std::filesystem::file_size(path) != expected * sizeof(float))
    throw std::runtime_error("dataset file size does not match its sidecar");
  std::vector<float> values(expected);
  {
    auto is = io::open_in(path, true);
    for (auto& v : values) v = io::read_le<float>(is);
  }
  std::size_t pos = 0;
  for (int i = 0; i < d.config.sample_count; ++i) {
    Sample s;
    s.h_a = detail::take_matrix(values, pos, d.n(), d.k());
    s.g_a = detail::take_matrix(values, pos, d.n(), d.k());
    s.h = detail::take_matrix(values, pos, d.n(), d.k());
    s.g = detail::take_matrix(values, pos, d.n(), d.k());
    d.samples.push_back(std::move(s));
  }
  d.train_indices = side.at("train_indices").get<std::vector<int>>();
  d.test_indices = side.at("test_indices").get<std::vector<int>>();
  d.ref_power = side.value("ref_power", reference_power(d.samples));
  return d;
}

}  // namespace ris::harness
