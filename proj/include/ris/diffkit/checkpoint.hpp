#pragma once

// Checkpoint file: one line of JSON (format_version, input shape, layer
// specs, param shapes) terminated by '\n', then every parameter block as
// little-endian float64 in layer order.

#include <filesystem>
#include <string>
#include <type_traits>

#include "ris/diffkit/network.hpp"
#include "ris/io.hpp"

namespace ris::diffkit {

inline io::json spec_to_json(const NetworkSpec& spec) {
  io::json layers = io::json::array();
  for (const auto& l : spec.layers) {
    io::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv2d:
        j["in_channels"] = l.in_channels;
        j["out_channels"] = l.out_channels;
        j["kernel"] = {l.conv.kernel_h, l.conv.kernel_w};
        j["padding"] = l.conv.padding;
        j["stride"] = l.conv.stride;
        break;
      case LayerKind::dense:
        j["in_nodes"] = l.in_channels;
        j["out_nodes"] = l.out_channels;
        break;
      case LayerKind::leaky_relu: j["alpha"] = l.alpha; break;
      case LayerKind::dropout: j["p"] = l.rate; break;
      default: break;
    }
    if (!l.role.empty()) j["role"] = l.role;
    layers.push_back(j);
  }
  return {{"input", {spec.input.height, spec.input.width, spec.input.channels}}, {"layers", layers}};
}

inline NetworkSpec spec_from_json(const io::json& j) {
  NetworkSpec spec;
  const auto& in = j.at("input");
  spec.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
    switch (l.kind) {
      case LayerKind::conv2d:
        l.in_channels = lj.at("in_channels");
        l.out_channels = lj.at("out_channels");
        l.conv.kernel_h = lj.at("kernel").at(0);
        l.conv.kernel_w = lj.at("kernel").at(1);
        l.conv.padding = lj.at("padding");
        l.conv.stride = lj.at("stride");
        break;
      case LayerKind::dense:
        l.in_channels = lj.at("in_nodes");
        l.out_channels = lj.at("out_nodes");
        break;
      case LayerKind::leaky_relu: l.alpha = lj.at("alpha"); break;
      case LayerKind::dropout: l.rate = lj.at("p"); break;
      default: break;
    }
    l.role = lj.value("role", "");
    spec.layers.push_back(l);
  }
  return spec;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, const io::json& extra = {}) {
  io::json header = spec_to_json(net.spec());
  header["format_version"] = 1;
  header["precision"] = std::is_same_v<T, float> ? "float" : "double";
  io::json shapes = io::json::array();
  for (const auto& p : net.params())
    shapes.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  header["params"] = shapes;
  if (!extra.is_null()) header["extra"] = extra;
  auto os = io::open_out(path, true);
  os << header.dump() << '\n';
  for (const auto& p : net.params())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) io::write_le<double>(os, static_cast<double>(p.value.data()[i]));
}

inline io::json read_checkpoint_header(const std::filesystem::path& path) {
  auto is = io::open_in(path, true);
  std::string line;
  std::getline(is, line);
  return io::json::parse(line);
}

template <class T>
Network<T> load_checkpoint(const std::filesystem::path& path) {
  auto is = io::open_in(path, true);
  std::string line;
  std::getline(is, line);
  const io::json header = io::json::parse(line);
  if (header.at("format_version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
  Network<T> net(spec_from_json(header), 0);
  const auto& shapes = header.at("params");
  if (shapes.size() != net.params().size()) throw std::runtime_error("checkpoint parameter count mismatch");
  std::size_t i = 0;
  for (auto& p : net.params()) {
    if (shapes[i].at("rows").get<Eigen::Index>() != p.value.rows() ||
        shapes[i].at("cols").get<Eigen::Index>() != p.value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    for (Eigen::Index e = 0; e < p.value.size(); ++e) p.value.data()[e] = static_cast<T>(io::read_le<double>(is));
    ++i;
  }
  return net;
}

}  // namespace ris::diffkit
