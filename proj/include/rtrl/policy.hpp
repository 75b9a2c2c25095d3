#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/mlp.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2 pi)

// Diagonal Gaussian policy pi(s, .) = N(mean(s), std(s)^2 Id). Mean and
// standard deviation are two linear heads on a shared tanh trunk; the std
// head output passes through x -> x + sqrt(x^2 + 1), which is strictly
// positive and maps pre-activations near zero to values near one.
//
// Canonical flattening order: trunk layers 0..T-1 (weights row-major, then
// bias), then mean head (weights, bias), then std head (weights, bias).
struct GaussianPolicy {
  std::vector<std::size_t> trunk_dims;  // d_0 .. d_T (T may be 0: heads on the input)
  std::vector<Vec> trunk_w;
  std::vector<Vec> trunk_b;
  Vec mean_w, mean_b;  // d_a x d_T
  Vec std_w, std_b;    // d_a x d_T

  std::size_t state_dim() const { return trunk_dims.front(); }
  std::size_t action_dim() const { return mean_b.size(); }
  std::size_t trunk_layers() const { return trunk_dims.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < trunk_dims.size(); ++l)
      n += trunk_dims[l + 1] * (trunk_dims[l] + 1);
    n += 2 * action_dim() * (trunk_dims.back() + 1);
    return n;
  }

  Vec flatten() const {
    Vec out;
    out.reserve(param_count());
    for (std::size_t l = 0; l < trunk_layers(); ++l) {
      out.insert(out.end(), trunk_w[l].begin(), trunk_w[l].end());
      out.insert(out.end(), trunk_b[l].begin(), trunk_b[l].end());
    }
    out.insert(out.end(), mean_w.begin(), mean_w.end());
    out.insert(out.end(), mean_b.begin(), mean_b.end());
    out.insert(out.end(), std_w.begin(), std_w.end());
    out.insert(out.end(), std_b.begin(), std_b.end());
    return out;
  }

  void unflatten(const Vec& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("GaussianPolicy::unflatten: length mismatch");
    std::size_t pos = 0;
    auto take = [&](Vec& dst) {
      std::copy(flat.begin() + pos, flat.begin() + pos + dst.size(), dst.begin());
      pos += dst.size();
    };
    for (std::size_t l = 0; l < trunk_layers(); ++l) {
      take(trunk_w[l]);
      take(trunk_b[l]);
    }
    take(mean_w);
    take(mean_b);
    take(std_w);
    take(std_b);
  }

  struct Forward {
    Vec mean;
    Vec stddev;
    Vec std_pre;            // std head pre-activation u, stddev = u + sqrt(u^2+1)
    std::vector<Vec> acts;  // trunk activations, acts[0] = s
  };

  Forward forward(const Vec& s) const {
    if (s.size() != state_dim())
      throw std::invalid_argument("GaussianPolicy::forward: state dimension mismatch");
    Forward f;
    const std::size_t T = trunk_layers();
    f.acts.assign(T + 1, Vec{});
    f.acts[0] = s;
    Vec z;
    for (std::size_t l = 0; l < T; ++l) {
      detail::affine(trunk_w[l], trunk_b[l], f.acts[l], z);
      for (double& v : z) v = std::tanh(v);
      f.acts[l + 1] = z;
    }
    detail::affine(mean_w, mean_b, f.acts[T], f.mean);
    detail::affine(std_w, std_b, f.acts[T], f.std_pre);
    f.stddev.resize(f.std_pre.size());
    for (std::size_t i = 0; i < f.std_pre.size(); ++i) {
      const double u = f.std_pre[i];
      f.stddev[i] = u + std::sqrt(u * u + 1.0);
    }
    return f;
  }

  Vec mean(const Vec& s) const { return forward(s).mean; }
  Vec stddev(const Vec& s) const { return forward(s).stddev; }

  // a = mean(s) + std(s) * z with z ~ N(0, Id); returns (a, z).
  std::pair<Vec, Vec> sample(const Vec& s, Rng& rng) const {
    const Forward f = forward(s);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec z(action_dim()), a(action_dim());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = normal(rng);
      a[i] = f.mean[i] + f.stddev[i] * z[i];
    }
    return {std::move(a), std::move(z)};
  }

  Vec sample_action(const Vec& s, Rng& rng) const { return sample(s, rng).first; }

  double log_prob(const Vec& s, const Vec& a) const {
    const Forward f = forward(s);
    double lp = 0.0;
    for (std::size_t i = 0; i < action_dim(); ++i) {
      const double sd = f.stddev[i];
      const double d = a[i] - f.mean[i];
      lp += -0.5 * kLogTwoPi - std::log(sd) - d * d / (2.0 * sd * sd);
    }
    return lp;
  }

  // Analytic d log pi(s, a) / d theta through both heads and the shared trunk.
  Vec grad_log_prob(const Vec& s, const Vec& a) const {
    if (a.size() != action_dim())
      throw std::invalid_argument("grad_log_prob: action dimension mismatch");
    const Forward f = forward(s);
    const std::size_t T = trunk_layers();
    const std::size_t da = action_dim();
    const std::size_t dt = trunk_dims.back();

    Vec g_mean(da), g_std_pre(da);
    for (std::size_t i = 0; i < da; ++i) {
      const double sd = f.stddev[i];
      const double d = a[i] - f.mean[i];
      g_mean[i] = d / (sd * sd);
      const double g_sd = -1.0 / sd + d * d / (sd * sd * sd);
      const double u = f.std_pre[i];
      g_std_pre[i] = g_sd * (1.0 + u / std::sqrt(u * u + 1.0));
    }

    Vec grad(param_count(), 0.0);
    std::size_t head_off = 0;
    for (std::size_t l = 0; l < T; ++l) head_off += trunk_w[l].size() + trunk_b[l].size();

    const Vec& h = f.acts[T];
    double* gm = grad.data() + head_off;
    for (std::size_t i = 0; i < da; ++i)
      for (std::size_t j = 0; j < dt; ++j) gm[i * dt + j] = g_mean[i] * h[j];
    for (std::size_t i = 0; i < da; ++i) gm[da * dt + i] = g_mean[i];
    double* gs = gm + da * (dt + 1);
    for (std::size_t i = 0; i < da; ++i)
      for (std::size_t j = 0; j < dt; ++j) gs[i * dt + j] = g_std_pre[i] * h[j];
    for (std::size_t i = 0; i < da; ++i) gs[da * dt + i] = g_std_pre[i];

    if (T > 0) {
      Vec delta(dt, 0.0);
      detail::add_transpose_times(mean_w, g_mean, da, dt, delta);
      detail::add_transpose_times(std_w, g_std_pre, da, dt, delta);
      for (std::size_t j = 0; j < dt; ++j) delta[j] *= 1.0 - h[j] * h[j];

      std::vector<std::size_t> offset(T);
      std::size_t pos = 0;
      for (std::size_t l = 0; l < T; ++l) {
        offset[l] = pos;
        pos += trunk_w[l].size() + trunk_b[l].size();
      }
      for (std::size_t l = T; l-- > 0;) {
        const std::size_t rows = trunk_dims[l + 1], cols = trunk_dims[l];
        const Vec& input = f.acts[l];
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
          detail::add_transpose_times(trunk_w[l], delta, rows, cols, prev);
          const Vec& hh = f.acts[l];
          for (std::size_t j = 0; j < cols; ++j) prev[j] *= 1.0 - hh[j] * hh[j];
          delta = std::move(prev);
        }
      }
    }
    return grad;
  }
};

// layer_dims = [d_s, hidden..., d_a]: the last entry is the width of both
// heads, everything before it is the shared trunk.
inline GaussianPolicy init_gaussian_policy(const std::vector<std::size_t>& layer_dims, Rng& rng) {
  detail::check_layer_dims(layer_dims);
  GaussianPolicy p;
  p.trunk_dims.assign(layer_dims.begin(), layer_dims.end() - 1);
  const std::size_t da = layer_dims.back();
  const std::size_t T = p.trunk_dims.size() - 1;
  p.trunk_w.resize(T);
  p.trunk_b.resize(T);
  for (std::size_t l = 0; l < T; ++l) {
    const std::size_t rows = p.trunk_dims[l + 1], cols = p.trunk_dims[l];
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(static_cast<double>(cols)),
                                             1.0 / std::sqrt(static_cast<double>(cols)));
    p.trunk_w[l].resize(rows * cols);
    p.trunk_b[l].resize(rows);
    for (double& w : p.trunk_w[l]) w = u(rng);
    for (double& b : p.trunk_b[l]) b = u(rng);
  }
  std::uniform_real_distribution<double> head(-5e-3, 5e-3);
  const std::size_t dt = p.trunk_dims.back();
  p.mean_w.resize(da * dt);
  p.mean_b.resize(da);
  p.std_w.resize(da * dt);
  p.std_b.resize(da);
  for (double& w : p.mean_w) w = head(rng);
  for (double& b : p.mean_b) b = head(rng);
  for (double& w : p.std_w) w = head(rng);
  for (double& b : p.std_b) b = head(rng);
  return p;
}

// Deterministic policy mu(s) = mlp_forward(params, s).
inline Vec deterministic_action(const MlpParams& params, const Vec& s) {
  return mlp_forward(params, s);
}

// d(v . mu_theta(s)) / d theta, by backpropagation seeded with v.
inline Vec vjp_policy(const MlpParams& params, const Vec& s, const Vec& v) {
  return mlp_vjp(params, s, v);
}

}  // namespace rtrl
