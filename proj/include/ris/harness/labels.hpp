#pragma once

// Oracle beam labels for a dataset: int32 LE file plus a JSON sidecar that
// ties the labels to the dataset they were computed from.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/beamsearch.hpp"
#include "ris/harness/dataset.hpp"
#include "ris/io.hpp"

namespace ris::harness {

struct LabelSet {
  std::vector<int> labels;
  std::string dataset_hash;
  int codebook_r1 = 2;
  int codebook_r2 = 2;
  double sigma2 = 1.0;
  int classes = 0;
};

/// Labels are taken on the data carrier f_c.
inline LabelSet compute_labels(const Dataset& d, int r1, int r2, double sigma2) {
  const auto b = beamsearch::build_codebook(d.config.geometry(), r1, r2);
  LabelSet out{{}, d.hash, r1, r2, sigma2, b.size()};
  out.labels.reserve(d.samples.size());
  for (const auto& s : d.samples) out.labels.push_back(beamsearch::oracle_label(s.h, s.g, b, sigma2).index);
  return out;
}

inline void write_labels(const LabelSet& l, const std::filesystem::path& path) {
  {
    auto os = io::open_out(path, true);
    for (int v : l.labels) io::write_le<std::int32_t>(os, v);
    if (!os) throw std::runtime_error("failed writing " + path.string());
  }
  io::write_json(sidecar_path(path), {{"format_version", 1},
                                      {"dataset_hash", l.dataset_hash},
                                      {"codebook_r1", l.codebook_r1},
                                      {"codebook_r2", l.codebook_r2},
                                      {"sigma2", l.sigma2},
                                      {"classes", l.classes},
                                      {"count", l.labels.size()}});
}

inline LabelSet read_labels(const std::filesystem::path& path) {
  const json side = io::read_json(sidecar_path(path));
  LabelSet l;
  l.dataset_hash = side.at("dataset_hash").get<std::string>();
  l.codebook_r1 = side.at("codebook_r1").get<int>();
  l.codebook_r2 = side.at("codebook_r2").get<int>();
  l.sigma2 = side.at("sigma2").get<double>();
  l.classes = side.at("classes").get<int>();
  const auto count = side.at("count").get<std::size_t>();
  if (std::filesystem::file_size(path) != count * sizeof(std::int32_t))
    throw std::runtime_error("label file size does not match its sidecar");
  auto is = io::open_in(path, true);
  l.labels.resize(count);
  for (auto& v : l.labels) {
    v = io::read_le<std::int32_t>(is);
    if (v < 0 || v >= l.classes) throw std::runtime_error("label out of range in " + path.string());
  }
  return l;
}

inline void check_labels_match(const LabelSet& l, const Dataset& d) {
  if (l.dataset_hash != d.hash) throw std::invalid_argument("label/dataset mismatch: labels were computed for dataset " + l.dataset_hash + ", got " + d.hash);
  if (l.labels.size() != d.samples.size()) throw std::invalid_argument("label/dataset mismatch: sample counts differ");
}

}  // namespace ris::harness
