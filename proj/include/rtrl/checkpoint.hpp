#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "rtrl/trainer.hpp"

namespace rtrl {

// Parameter checkpoints: a layer-dims header plus the flat parameter vector
// in canonical flattening order. Two on-disk formats:
//   json:   {"kind": ..., "layers": [...], "params": [...]}
//   binary: magic "RTPC", u32 version, u8 kind (0 gaussian, 1 deterministic),
//           u32 n_dims, u32 dims..., u64 count, f64 params...; little-endian.
static_assert(std::endian::native == std::endian::little,
              "binary checkpoints assume a little-endian host");

inline MlpParams mlp_shape(const std::vector<std::size_t>& layer_dims) {
  MlpParams p;
  p.layer_dims = layer_dims;
  const std::size_t L = layer_dims.size() - 1;
  p.weights.resize(L);
  p.biases.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    p.weights[l].assign(layer_dims[l + 1] * layer_dims[l], 0.0);
    p.biases[l].assign(layer_dims[l + 1], 0.0);
  }
  return p;
}

inline GaussianPolicy gaussian_policy_shape(const std::vector<std::size_t>& layer_dims) {
  GaussianPolicy p;
  p.trunk_dims.assign(layer_dims.begin(), layer_dims.end() - 1);
  const std::size_t da = layer_dims.back();
  const std::size_t T = p.trunk_dims.size() - 1;
  p.trunk_w.resize(T);
  p.trunk_b.resize(T);
  for (std::size_t l = 0; l < T; ++l) {
    p.trunk_w[l].assign(p.trunk_dims[l + 1] * p.trunk_dims[l], 0.0);
    p.trunk_b[l].assign(p.trunk_dims[l + 1], 0.0);
  }
  const std::size_t dt = p.trunk_dims.back();
  p.mean_w.assign(da * dt, 0.0);
  p.mean_b.assign(da, 0.0);
  p.std_w.assign(da * dt, 0.0);
  p.std_b.assign(da, 0.0);
  return p;
}

namespace detail {

inline std::vector<std::size_t> checkpoint_layers(const PolicyVariant& policy) {
  if (const auto* g = std::get_if<GaussianPolicy>(&policy)) {
    std::vector<std::size_t> dims = g->trunk_dims;
    dims.push_back(g->action_dim());
    return dims;
  }
  return std::get<MlpParams>(policy).layer_dims;
}

inline Vec checkpoint_params(const PolicyVariant& policy) {
  return std::visit([](const auto& p) { return p.flatten(); }, policy);
}

template <typename T>
void write_raw(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_raw(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return value;
}

}  // namespace detail

inline void save_checkpoint(const PolicyVariant& policy, const std::string& path,
                            CheckpointFormat format) {
  const bool gaussian = std::holds_alternative<GaussianPolicy>(policy);
  const auto layers = detail::checkpoint_layers(policy);
  const Vec params = detail::checkpoint_params(policy);

  if (format == CheckpointFormat::json) {
    nlohmann::json doc{{"kind", gaussian ? "gaussian" : "deterministic"},
                       {"layers", layers},
                       {"params", params}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    out << doc.dump(2) << '\n';
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  out.write("RTPC", 4);
  detail::write_raw<std::uint32_t>(out, 1);
  detail::write_raw<std::uint8_t>(out, gaussian ? 0 : 1);
  detail::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
  for (std::size_t d : layers) detail::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  detail::write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
}

inline PolicyVariant load_checkpoint(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4] = {};
  probe.read(magic, 4);

  std::vector<std::size_t> layers;
  Vec params;
  bool gaussian = false;

  if (probe && std::strncmp(magic, "RTPC", 4) == 0) {
    const auto version = detail::read_raw<std::uint32_t>(probe);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    gaussian = detail::read_raw<std::uint8_t>(probe) == 0;
    const auto n_dims = detail::read_raw<std::uint32_t>(probe);
    for (std::uint32_t i = 0; i < n_dims; ++i)
      layers.push_back(detail::read_raw<std::uint32_t>(probe));
    const auto count = detail::read_raw<std::uint64_t>(probe);
    params.resize(count);
    probe.read(reinterpret_cast<char*>(params.data()),
               static_cast<std::streamsize>(count * sizeof(double)));
    if (!probe) throw std::runtime_error("checkpoint: truncated file");
  } else {
    std::ifstream in(path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("checkpoint: invalid file: ") + e.what());
    }
    gaussian = doc.at("kind").get<std::string>() == "gaussian";
    layers = doc.at("layers").get<std::vector<std::size_t>>();
    params = doc.at("params").get<Vec>();
  }

  if (gaussian) {
    GaussianPolicy p = gaussian_policy_shape(layers);
    p.unflatten(params);
    return p;
  }
  MlpParams p = mlp_shape(layers);
  p.unflatten(params);
  return p;
}

}  // namespace rtrl
