#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

// Feed-forward network with tanh hidden activations and identity output.
// weights[l] maps layer l to layer l+1 and is stored row-major
// (d_{l+1} x d_l); biases[l] has length d_{l+1}.
//
// Canonical flattening order (used by every gradient and checkpoint):
// for l = 0..L-1: weights[l] row by row, then biases[l].
struct MlpParams {
  std::vector<std::size_t> layer_dims;  // d_0 .. d_L
  std::vector<Vec> weights;
  std::vector<Vec> biases;

  std::size_t num_layers() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
      n += layer_dims[l + 1] * (layer_dims[l] + 1);
    return n;
  }

  Vec flatten() const {
    Vec out;
    out.reserve(param_count());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      out.insert(out.end(), weights[l].begin(), weights[l].end());
      out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
    return out;
  }

  void unflatten(const Vec& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("MlpParams::unflatten: length mismatch");
    std::size_t pos = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      std::copy(flat.begin() + pos, flat.begin() + pos + weights[l].size(), weights[l].begin());
      pos += weights[l].size();
      std::copy(flat.begin() + pos, flat.begin() + pos + biases[l].size(), biases[l].begin());
      pos += biases[l].size();
    }
  }
};

namespace detail {

inline void check_layer_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ConfigError("layer dims: need at least input and output dimension");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("layer dims: zero-width layer");
}

// y = W x + b, W row-major (rows x cols).
inline void affine(const Vec& w, const Vec& b, const Vec& x, Vec& y) {
  const std::size_t rows = b.size(), cols = x.size();
  y.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = b[i];
    const double* row = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

// x += W^T delta, W row-major (rows x cols).
inline void add_transpose_times(const Vec& w, const Vec& delta, std::size_t rows,
                                std::size_t cols, Vec& x) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    const double d = delta[i];
    for (std::size_t j = 0; j < cols; ++j) x[j] += d * row[j];
  }
}

}  // namespace detail

// Hidden layers use uniform +-1/sqrt(fan-in); the final layer uses
// U(-5e-3, 5e-3) so that initial outputs are close to zero.
inline MlpParams init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
  detail::check_layer_dims(layer_dims);
  MlpParams p;
  p.layer_dims = layer_dims;
  const std::size_t L = p.num_layers();
  p.weights.resize(L);
  p.biases.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t rows = layer_dims[l + 1], cols = layer_dims[l];
    const double bound =
        (l + 1 == L) ? 5e-3 : 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    p.weights[l].resize(rows * cols);
    p.biases[l].resize(rows);
    for (double& w : p.weights[l]) w = u(rng);
    for (double& b : p.biases[l]) b = u(rng);
  }
  return p;
}

struct MlpCache {
  std::vector<Vec> acts;  // acts[0] = input, acts[l] = post-activation of layer l
};

inline Vec mlp_forward_cached(const MlpParams& p, const Vec& x, MlpCache& cache) {
  if (x.size() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  const std::size_t L = p.num_layers();
  cache.acts.assign(L + 1, Vec{});
  cache.acts[0] = x;
  Vec z;
  for (std::size_t l = 0; l < L; ++l) {
    detail::affine(p.weights[l], p.biases[l], cache.acts[l], z);
    if (l + 1 < L)
      for (double& v : z) v = std::tanh(v);
    cache.acts[l + 1] = z;
  }
  return cache.acts[L];
}

inline Vec mlp_forward(const MlpParams& p, const Vec& x) {
  MlpCache cache;
  return mlp_forward_cached(p, x, cache);
}

// Transpose-Jacobian product seeded at the output: returns d(v . f(x)) / d theta
// in canonical flattening order.
inline Vec mlp_vjp(const MlpParams& p, const Vec& x, const Vec& v) {
  if (v.size() != p.output_dim())
    throw std::invalid_argument("mlp_vjp: seed dimension mismatch");
  MlpCache cache;
  mlp_forward_cached(p, x, cache);

  const std::size_t L = p.num_layers();
  Vec grad(p.param_count(), 0.0);

  // Offsets of each layer's (weights, bias) block in the flat gradient.
  std::vector<std::size_t> offset(L);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = pos;
    pos += p.weights[l].size() + p.biases[l].size();
  }

  Vec delta = v;  // identity output activation
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t rows = p.layer_dims[l + 1], cols = p.layer_dims[l];
    const Vec& input = cache.acts[l];
    double* gw = grad.data() + offset[l];
    double* gb = gw + rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      const double d = delta[i];
      double* row = gw + i * cols;
      for (std::size_t j = 0; j < cols; ++j) row[j] += d * input[j];
      gb[i] += d;
    }
    if (l > 0) {
      Vec prev(cols, 0.0);
      detail::add_transpose_times(p.weights[l], delta, rows, cols, prev);
      const Vec& h = cache.acts[l];  // post-tanh activation of layer l
      for (std::size_t j = 0; j < cols; ++j) prev[j] *= 1.0 - h[j] * h[j];
      delta = std::move(prev);
    }
  }
  return grad;
}

}  // namespace rtrl
