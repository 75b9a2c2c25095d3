#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/env.hpp"
#include "rtrl/policy.hpp"

namespace rtrl {

// Which return weighs the score at step n: the full trajectory return or the
// return from n onward. Both have the same expectation; reward-to-go usually
// has lower variance.
enum class PgVariant { full_return, reward_to_go };

// Deterministic model-based analog: the noise term at step n is weighted by
// the full return or by the return from n+1 onward.
enum class DpgVariant { full_return, reward_to_go_next };

struct Baseline {
  enum class Kind { none, batch_mean_return, custom };
  Kind kind = Kind::none;
  std::function<double(const Vec&)> fn;  // state -> real, used for Kind::custom

  static Baseline none() { return {}; }
  static Baseline batch_mean_return() { return {Kind::batch_mean_return, nullptr}; }
  static Baseline custom(std::function<double(const Vec&)> f) {
    return {Kind::custom, std::move(f)};
  }
};

struct ReturnProfile {
  Vec returns_to_go;  // G_n = sum_{m=n}^{N} r_m for n = 0..N
  double total = 0.0;  // G_0
};

// Backward accumulation G_n = r_n + G_{n+1}, G_{N+1} = 0.
inline ReturnProfile returns_from_trajectory(const Trajectory& t) {
  ReturnProfile p;
  p.returns_to_go.assign(t.rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t n = t.rewards.size(); n-- > 0;) {
    acc += t.rewards[n];
    p.returns_to_go[n] = acc;
  }
  p.total = acc;
  return p;
}

struct GradientEstimate {
  Vec grad;
  double z_hat = 0.0;          // mean(N_k + 1)
  double mean_return = 0.0;    // mean G_0
  double mean_hitting_time = 0.0;
  double censor_rate = 0.0;
  double grad_norm = 0.0;
};

// Z-hat = mean of (N_k + 1) over the batch.
inline double estimate_z(const std::vector<Trajectory>& batch) {
  if (batch.empty()) throw std::invalid_argument("estimate_z: empty batch");
  double s = 0.0;
  for (const auto& t : batch) s += static_cast<double>(t.hitting_step) + 1.0;
  return s / static_cast<double>(batch.size());
}

namespace detail {

struct BatchDiagnostics {
  double mean_return, mean_hitting_time, censor_rate, z_hat;
};

inline BatchDiagnostics batch_diagnostics(const std::vector<Trajectory>& batch) {
  BatchDiagnostics d{0.0, 0.0, 0.0, 0.0};
  for (const auto& t : batch) {
    d.mean_return += returns_from_trajectory(t).total;
    d.mean_hitting_time += static_cast<double>(t.hitting_step);
    d.censor_rate += t.censored ? 1.0 : 0.0;
  }
  const double k = static_cast<double>(batch.size());
  d.mean_return /= k;
  d.mean_hitting_time /= k;
  d.censor_rate /= k;
  d.z_hat = d.mean_hitting_time + 1.0;
  return d;
}

inline void finalize(GradientEstimate& est) {
  if (!all_finite(est.grad)) throw DivergenceError("gradient estimate is non-finite");
  est.grad_norm = l2_norm(est.grad);
}

}  // namespace detail

// REINFORCE with random time horizon:
//   grad = (1/K) sum_k sum_{n=0}^{N_k} grad_log_prob(S_n, A_n) (G - b(S_n)),
// with G the full return or the return-to-go at n.
template <StochasticPolicy P>
GradientEstimate trajectory_pg(const std::vector<Trajectory>& batch, const P& policy,
                               PgVariant variant, const Baseline& baseline = Baseline::none()) {
  if (batch.empty()) throw std::invalid_argument("trajectory_pg: empty batch");

  double batch_mean = 0.0;
  std::vector<ReturnProfile> profiles;
  profiles.reserve(batch.size());
  for (const auto& t : batch) {
    profiles.push_back(returns_from_trajectory(t));
    batch_mean += profiles.back().total;
  }
  batch_mean /= static_cast<double>(batch.size());

  auto baseline_at = [&](const Vec& s) -> double {
    switch (baseline.kind) {
      case Baseline::Kind::none: return 0.0;
      case Baseline::Kind::batch_mean_return: return batch_mean;
      case Baseline::Kind::custom: return baseline.fn(s);
    }
    return 0.0;
  };

  GradientEstimate est;
  est.grad.assign(policy.param_count(), 0.0);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Trajectory& t = batch[k];
    const ReturnProfile& rp = profiles[k];
    for (std::size_t n = 0; n <= t.hitting_step; ++n) {
      const double g = (variant == PgVariant::full_return) ? rp.total : rp.returns_to_go[n];
      const double w = g - baseline_at(t.states[n]);
      if (w == 0.0) continue;
      axpy(w, policy.grad_log_prob(t.states[n], t.actions[n]), est.grad);
    }
  }
  scale(est.grad, 1.0 / static_cast<double>(batch.size()));

  const auto d = detail::batch_diagnostics(batch);
  est.z_hat = d.z_hat;
  est.mean_return = d.mean_return;
  est.mean_hitting_time = d.mean_hitting_time;
  est.censor_rate = d.censor_rate;
  detail::finalize(est);
  return est;
}

// Flattened on-policy experience: one entry per visited state, terminal
// visits included, so the entry count is sum_k (N_k + 1).
struct StochasticExperience {
  Vec state;
  Vec action;
  double return_to_go;  // G_n, estimates Q(state, action)
};

struct ModelExperience {
  Vec state;
  Vec next_state;
  Vec noise;           // xi that generated next_state; zero for terminal entries
  double next_return;  // G_{n+1}, estimates V(next_state); 0 for terminal entries
};

template <typename Entry>
struct ExperienceBuffer {
  std::vector<Entry> entries;
  std::size_t num_trajectories = 0;
  detail::BatchDiagnostics diag{0.0, 0.0, 0.0, 0.0};

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

using StochasticBuffer = ExperienceBuffer<StochasticExperience>;
using ModelBuffer = ExperienceBuffer<ModelExperience>;

inline StochasticBuffer build_stochastic_buffer(const std::vector<Trajectory>& batch) {
  StochasticBuffer buf;
  buf.num_trajectories = batch.size();
  for (const auto& t : batch) {
    const ReturnProfile rp = returns_from_trajectory(t);
    for (std::size_t n = 0; n <= t.hitting_step; ++n)
      buf.entries.push_back({t.states[n], t.actions[n], rp.returns_to_go[n]});
  }
  if (!batch.empty()) buf.diag = detail::batch_diagnostics(batch);
  return buf;
}

// Tuples (S_n, S_{n+1}, xi_{n+1}, G_{n+1}) for n < N plus a degenerate entry
// for the final state (zero noise, zero onward return), which keeps the
// buffer an unbiased sample of the full occupancy including terminal visits.
inline ModelBuffer build_model_buffer(const std::vector<Trajectory>& batch) {
  ModelBuffer buf;
  buf.num_trajectories = batch.size();
  for (const auto& t : batch) {
    const std::size_t n_steps = t.hitting_step;
    if (t.noises.size() != n_steps)
      throw std::invalid_argument("build_model_buffer: trajectory has no noise records");
    const ReturnProfile rp = returns_from_trajectory(t);
    const std::size_t dim = t.states.front().size();
    for (std::size_t n = 0; n < n_steps; ++n)
      buf.entries.push_back({t.states[n], t.states[n + 1], t.noises[n], rp.returns_to_go[n + 1]});
    buf.entries.push_back({t.states[n_steps], t.states[n_steps], Vec(dim, 0.0), 0.0});
  }
  if (!batch.empty()) buf.diag = detail::batch_diagnostics(batch);
  return buf;
}

namespace detail {

// Uniform subset of size m out of n, accumulated in index order so that
// m == n reproduces the trajectory-order sum bit for bit.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, n - 1);
    std::swap(idx[i], idx[u(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::size_t experience_count(double m_fraction, std::size_t buffer_size) {
  if (!(m_fraction > 0.0) || m_fraction > 1.0)
    throw std::invalid_argument("m_fraction must be in (0, 1]");
  const auto m = static_cast<std::size_t>(
      std::ceil(m_fraction * static_cast<double>(buffer_size)));
  return std::min(std::max<std::size_t>(m, 1), buffer_size);
}

template <typename Buffer>
GradientEstimate from_buffer(const Buffer& buf, Vec&& core, double z_hat, bool biased) {
  GradientEstimate est;
  est.grad = std::move(core);
  if (!biased) scale(est.grad, z_hat);
  est.z_hat = z_hat;
  est.mean_return = buf.diag.mean_return;
  est.mean_hitting_time = buf.diag.mean_hitting_time;
  est.censor_rate = buf.diag.censor_rate;
  finalize(est);
  return est;
}

}  // namespace detail

// State-space policy gradient: draw M = ceil(m_fraction * |buffer|)
// experiences uniformly without replacement and average the score-weighted
// returns. The unbiased form scales by z_hat = mean(N+1); the biased form
// omits the factor (the classical estimator).
template <StochasticPolicy P>
GradientEstimate state_space_pg(const StochasticBuffer& buf, const P& policy, double z_hat,
                                double m_fraction, bool biased, Rng& rng) {
  if (buf.empty()) throw std::invalid_argument("state_space_pg: empty buffer");
  const std::size_t m = detail::experience_count(m_fraction, buf.size());
  const auto idx = detail::sample_without_replacement(buf.size(), m, rng);

  Vec core(policy.param_count(), 0.0);
  for (std::size_t i : idx) {
    const auto& e = buf.entries[i];
    if (e.return_to_go == 0.0) continue;
    axpy(e.return_to_go, policy.grad_log_prob(e.state, e.action), core);
  }
  scale(core, 1.0 / static_cast<double>(m));
  return detail::from_buffer(buf, std::move(core), z_hat, biased);
}

// d log p(s', s, a) / da for the Langevin transition density
// N(s + (a - grad U(s)) dt, sigma^2 dt Id):
//   (s' - s - (a - grad U(s)) dt) / sigma^2,
// which equals (sqrt(dt)/sigma) xi when s' was generated with increment xi.
inline Vec grad_a_log_p(const Vec& s, const Vec& s_next, const Vec& a, const DoubleWell& env) {
  const Vec g = env.grad_potential(s);
  Vec out(env.dim);
  for (std::size_t i = 0; i < env.dim; ++i)
    out[i] = (s_next[i] - s[i] - (a[i] - g[i]) * env.dt) / (env.sigma * env.sigma);
  return out;
}

namespace detail {

// Per-step seed vector of the model-based deterministic policy gradient:
//   v_n = grad_a r(S_n, a)|_{a = A_n} + G * (sqrt(dt)/sigma) xi_{n+1},
// where G is the full return (m = 0 form) or the return from n+1 onward.
// The final step carries no noise term: conditioned on the history its score
// factor has zero mean, and on the terminal set grad_a r vanishes as well.
inline Vec dpg_step_seed(const Vec& state, const Vec& action, const Vec* xi_next,
                         double return_weight, const DoubleWell& env) {
  Vec v(env.dim, 0.0);
  if (!env.is_terminal(state))
    for (std::size_t i = 0; i < env.dim; ++i) v[i] = -action[i] * env.dt;
  if (xi_next != nullptr && return_weight != 0.0) {
    const double c = return_weight * std::sqrt(env.dt) / env.sigma;
    for (std::size_t i = 0; i < env.dim; ++i) v[i] += c * (*xi_next)[i];
  }
  return v;
}

}  // namespace detail

// Trajectory, model-based deterministic policy gradient:
//   grad = (1/K) sum_k sum_{n=0}^{N_k} d mu(S_n)/d theta ^T v_n,
// with v_n as in detail::dpg_step_seed.
inline GradientEstimate trajectory_dpg(const std::vector<Trajectory>& batch,
                                       const MlpParams& policy, const DoubleWell& env,
                                       DpgVariant variant) {
  if (batch.empty()) throw std::invalid_argument("trajectory_dpg: empty batch");

  GradientEstimate est;
  est.grad.assign(policy.param_count(), 0.0);
  for (const auto& t : batch) {
    if (t.noises.size() != t.hitting_step)
      throw std::invalid_argument("trajectory_dpg: trajectory has no noise records");
    const ReturnProfile rp = returns_from_trajectory(t);
    for (std::size_t n = 0; n <= t.hitting_step; ++n) {
      const bool has_noise = n < t.hitting_step;
      const double g = (variant == DpgVariant::full_return) ? rp.total
                                                            : (has_noise ? rp.returns_to_go[n + 1] : 0.0);
      const Vec v = detail::dpg_step_seed(t.states[n], t.actions[n],
                                          has_noise ? &t.noises[n] : nullptr, g, env);
      axpy(1.0, vjp_policy(policy, t.states[n], v), est.grad);
    }
  }
  scale(est.grad, 1.0 / static_cast<double>(batch.size()));

  const auto d = detail::batch_diagnostics(batch);
  est.z_hat = d.z_hat;
  est.mean_return = d.mean_return;
  est.mean_hitting_time = d.mean_hitting_time;
  est.censor_rate = d.censor_rate;
  detail::finalize(est);
  return est;
}

// State-space, model-based deterministic policy gradient over sampled
// (s, s', xi, G') tuples; mu_theta is re-evaluated at the stored states.
inline GradientEstimate state_space_dpg(const ModelBuffer& buf, const MlpParams& policy,
                                        const DoubleWell& env, double z_hat, double m_fraction,
                                        bool biased, Rng& rng) {
  if (buf.empty()) throw std::invalid_argument("state_space_dpg: empty buffer");
  const std::size_t m = detail::experience_count(m_fraction, buf.size());
  const auto idx = detail::sample_without_replacement(buf.size(), m, rng);

  Vec core(policy.param_count(), 0.0);
  for (std::size_t i : idx) {
    const auto& e = buf.entries[i];
    const Vec action = mlp_forward(policy, e.state);
    const Vec v = detail::dpg_step_seed(e.state, action, &e.noise, e.next_return, env);
    axpy(1.0, vjp_policy(policy, e.state, v), core);
  }
  scale(core, 1.0 / static_cast<double>(m));
  return detail::from_buffer(buf, std::move(core), z_hat, biased);
}

// Visit counts of two selected state coordinates on a rectangular grid.
// Points outside the grid are clamped into the boundary cells, so the total
// count is exactly sum_k (N_k + 1).
struct GridSpec {
  double lo0, hi0, lo1, hi1;
  std::size_t n0, n1;
};

struct OccupancyHistogram {
  GridSpec grid{};
  std::pair<std::size_t, std::size_t> coords{0, 1};
  std::vector<std::int64_t> counts;  // n0 x n1, row-major
  std::int64_t total = 0;

  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * grid.n1 + j]; }

  Vec normalized() const {
    Vec out(counts.size(), 0.0);
    if (total > 0)
      for (std::size_t i = 0; i < counts.size(); ++i)
        out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return out;
  }

  void write_csv(std::ostream& os) const {
    const Vec norm = normalized();
    os << "row,col,count,normalized\n";
    for (std::size_t i = 0; i < grid.n0; ++i)
      for (std::size_t j = 0; j < grid.n1; ++j)
        os << i << ',' << j << ',' << at(i, j) << ','
           << format_double(norm[i * grid.n1 + j]) << '\n';
  }
};

inline OccupancyHistogram occupancy_histogram(const std::vector<Trajectory>& batch,
                                              std::pair<std::size_t, std::size_t> coords,
                                              const GridSpec& grid) {
  if (grid.n0 == 0 || grid.n1 == 0 || !(grid.hi0 > grid.lo0) || !(grid.hi1 > grid.lo1))
    throw std::invalid_argument("occupancy_histogram: invalid grid");
  OccupancyHistogram h;
  h.grid = grid;
  h.coords = coords;
  h.counts.assign(grid.n0 * grid.n1, 0);
  auto cell = [](double x, double lo, double hi, std::size_t n) {
    const double f = (x - lo) / (hi - lo) * static_cast<double>(n);
    const auto i = static_cast<std::int64_t>(std::floor(f));
    return static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(n) - 1));
  };
  for (const auto& t : batch)
    for (const auto& s : t.states) {
      const std::size_t i = cell(s[coords.first], grid.lo0, grid.hi0, grid.n0);
      const std::size_t j = cell(s[coords.second], grid.lo1, grid.hi1, grid.n1);
      ++h.counts[i * grid.n1 + j];
      ++h.total;
    }
  return h;
}

// Return of a rollout truncated at an independent geometric horizon
// N_gamma ~ Geom(1 - gamma) with support {0, 1, ...}: sum_{n=0}^{N_gamma} r_n
// undiscounted. Equal in expectation to the gamma-discounted infinite sum.
template <Environment E, typename P>
double geometric_horizon_return(const E& env, const P& policy, double gamma, Rng& rng) {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw std::invalid_argument("geometric_horizon_return: gamma must be in (0, 1)");
  std::geometric_distribution<std::uint64_t> geom(1.0 - gamma);
  const std::uint64_t horizon = geom(rng);
  Vec s = env.initial_state(rng);
  double sum = 0.0;
  for (std::uint64_t n = 0; n <= horizon; ++n) {
    if (env.is_terminal(s)) break;  // reward is identically zero from here on
    const Vec a = detail::policy_act(policy, s, rng);
    const Vec a_exec = detail::executed_action(env, a);
    sum += env.reward(s, a_exec);
    if (n == horizon) break;
    Vec noise;
    s = env.step(s, a_exec, rng, noise);
  }
  return sum;
}

}  // namespace rtrl
