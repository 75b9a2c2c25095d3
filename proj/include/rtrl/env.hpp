#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <random>
#include <variant>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/mlp.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

// One rollout, stopped at the first hitting time N of the terminal set (or
// at the step cap, in which case censored = true).
//   states:  S_0 .. S_N          (N+1 entries)
//   actions: A_0 .. A_N          (raw policy outputs; A_N is recorded but
//                                 reward-inert on the terminal set)
//   rewards: r_0 .. r_N          (r_N = 0 unless censored)
//   noises:  xi_1 .. xi_N        (standard-normal increments that generated
//                                 S_1..S_N; empty for deterministic dynamics)
struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  Vec rewards;
  std::vector<Vec> noises;
  std::size_t hitting_step = 0;
  bool censored = false;
};

struct FixedPoint {
  Vec point;
};
struct UniformBox {
  Vec lower, upper;
};
using InitialStateDistribution = std::variant<FixedPoint, UniformBox>;

inline Vec sample_initial(const InitialStateDistribution& init, Rng& rng) {
  if (const auto* fp = std::get_if<FixedPoint>(&init)) return fp->point;
  const auto& box = std::get<UniformBox>(init);
  Vec s(box.lower.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (box.lower[i] == box.upper[i]) {
      s[i] = box.lower[i];
    } else {
      std::uniform_real_distribution<double> u(box.lower[i], box.upper[i]);
      s[i] = u(rng);
    }
  }
  return s;
}

inline std::size_t initial_dim(const InitialStateDistribution& init) {
  if (const auto* fp = std::get_if<FixedPoint>(&init)) return fp->point.size();
  return std::get<UniformBox>(init).lower.size();
}

// Continuous mountain car with first-hitting termination at x >= 0.45 and a
// runtime-penalizing reward. Dynamics are deterministic; velocity is clipped
// to its box and the left wall is inelastic (standard benchmark semantics,
// which the paper leaves implicit).
struct MountainCar {
  double position_min = -1.2;
  double position_max = 0.6;
  double velocity_min = -0.07;
  double velocity_max = 0.07;
  double goal_position = 0.45;
  double action_cost = 0.1;
  std::size_t step_cap = 1'000'000;
  InitialStateDistribution initial = UniformBox{{-0.6, 0.0}, {-0.4, 0.0}};

  std::size_t state_dim() const { return 2; }
  std::size_t action_dim() const { return 1; }
  std::size_t max_steps() const { return step_cap; }

  bool is_terminal(const Vec& s) const { return s[0] >= goal_position; }

  Vec clip_action(const Vec& a) const { return {std::clamp(a[0], -1.0, 1.0)}; }

  double reward(const Vec& s, const Vec& a) const {
    if (is_terminal(s)) return 0.0;
    return -1.0 - action_cost * a[0] * a[0];
  }

  // v' = clip(v + 0.0015 a - 0.0025 cos(3x)); x' = x + v'; inelastic left wall.
  Vec step(const Vec& s, const Vec& a, Rng&, Vec& noise) const {
    noise.clear();
    if (!all_finite(s) || !all_finite(a))
      throw std::invalid_argument("mountain car: non-finite state or action");
    const double x = s[0], v = s[1];
    double v_next = std::clamp(v + 0.0015 * a[0] - 0.0025 * std::cos(3.0 * x),
                               velocity_min, velocity_max);
    double x_next = x + v_next;
    if (x_next < position_min) {
      x_next = position_min;
      v_next = 0.0;
    }
    return {x_next, v_next};
  }

  Vec initial_state(Rng& rng) const { return sample_initial(initial, rng); }
};

// Overdamped Langevin dynamics in the multi-well potential
// U(s) = sum_i alpha_i (s_i^2 - 1)^2, discretized by Euler-Maruyama:
//   s' = s + (a - grad U(s)) dt + sigma sqrt(dt) xi,  xi ~ N(0, Id).
// The terminal set constrains the first two coordinates (only the first for
// dim = 1): all positive and the restricted potential below target_level.
// A negative target_level disables termination.
struct DoubleWell {
  std::size_t dim = 2;
  Vec alphas = {1.0, 1.0};
  double sigma = std::sqrt(2.0);
  double dt = 1e-2;
  double target_level = 0.25;
  std::size_t step_cap = 1'000'000;
  InitialStateDistribution initial = FixedPoint{{-1.0, -1.0}};

  std::size_t state_dim() const { return dim; }
  std::size_t action_dim() const { return dim; }
  std::size_t max_steps() const { return step_cap; }

  void validate() const {
    if (dim == 0) throw ConfigError("env.d: must be positive");
    if (alphas.size() != dim) throw ConfigError("env.alphas: length must equal env.d");
    for (double a : alphas)
      if (!(a > 0.0)) throw ConfigError("env.alphas: entries must be positive");
    if (!(sigma > 0.0)) throw ConfigError("env.sigma: must be positive");
    if (!(dt > 0.0)) throw ConfigError("env.dt: must be positive");
    if (initial_dim(initial) != dim) throw ConfigError("env.initial: dimension mismatch");
  }

  double potential(const Vec& s) const {
    double u = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double t = s[i] * s[i] - 1.0;
      u += alphas[i] * t * t;
    }
    return u;
  }

  // component i: 4 alpha_i s_i (s_i^2 - 1)
  Vec grad_potential(const Vec& s) const {
    if (s.size() != dim) throw std::invalid_argument("grad_potential: dimension mismatch");
    Vec g(dim);
    for (std::size_t i = 0; i < dim; ++i)
      g[i] = 4.0 * alphas[i] * s[i] * (s[i] * s[i] - 1.0);
    return g;
  }

  bool is_terminal(const Vec& s) const {
    if (target_level < 0.0) return false;
    const std::size_t m = std::min<std::size_t>(dim, 2);
    double u = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!(s[i] > 0.0)) return false;
      const double t = s[i] * s[i] - 1.0;
      u += alphas[i] * t * t;
    }
    return u <= target_level;
  }

  double reward(const Vec& s, const Vec& a) const {
    if (is_terminal(s)) return 0.0;
    return -dt - 0.5 * squared_norm(a) * dt;
  }

  Vec step(const Vec& s, const Vec& a, Rng& rng, Vec& noise) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    noise.resize(dim);
    for (double& x : noise) x = normal(rng);
    return step_with_noise(s, a, noise);
  }

  Vec step_with_noise(const Vec& s, const Vec& a, const Vec& xi) const {
    if (s.size() != dim || a.size() != dim || xi.size() != dim)
      throw std::invalid_argument("langevin step: dimension mismatch");
    const Vec g = grad_potential(s);
    const double scale = sigma * std::sqrt(dt);
    Vec out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = s[i] + (a[i] - g[i]) * dt + scale * xi[i];
    if (!all_finite(out))
      throw DivergenceError("langevin step: non-finite state (step size too large or exploding policy)");
    return out;
  }

  Vec initial_state(Rng& rng) const { return sample_initial(initial, rng); }
};

template <typename E>
concept Environment = requires(const E e, const Vec& s, const Vec& a, Rng& rng, Vec& noise) {
  { e.state_dim() } -> std::convertible_to<std::size_t>;
  { e.action_dim() } -> std::convertible_to<std::size_t>;
  { e.max_steps() } -> std::convertible_to<std::size_t>;
  { e.is_terminal(s) } -> std::same_as<bool>;
  { e.reward(s, a) } -> std::same_as<double>;
  { e.step(s, a, rng, noise) } -> std::same_as<Vec>;
  { e.initial_state(rng) } -> std::same_as<Vec>;
};

template <typename P>
concept StochasticPolicy = requires(const P p, const Vec& s, const Vec& a, Rng& rng) {
  { p.sample_action(s, rng) } -> std::same_as<Vec>;
  { p.grad_log_prob(s, a) } -> std::same_as<Vec>;
  { p.param_count() } -> std::convertible_to<std::size_t>;
};

namespace detail {

template <typename P>
Vec policy_act(const P& policy, const Vec& s, Rng& rng) {
  if constexpr (StochasticPolicy<P>) {
    return policy.sample_action(s, rng);
  } else if constexpr (requires(const P p, const Vec& v) {
                         { p.action(v) } -> std::same_as<Vec>;
                       }) {
    (void)rng;
    return policy.action(s);
  } else {
    (void)rng;
    return mlp_forward(policy, s);
  }
}

template <Environment E>
Vec executed_action(const E& env, const Vec& a) {
  if constexpr (requires(const E e, const Vec& v) { { e.clip_action(v) } -> std::same_as<Vec>; })
    return env.clip_action(a);
  else
    return a;
}

}  // namespace detail

// Rollout from rho_0 until the terminal set is hit or the step cap is
// reached. Actions are recorded as the raw policy output; the environment's
// action clipping (if any) applies to dynamics and reward only, so that
// score-function gradients stay well-defined at the sampled action.
template <Environment E, typename P>
Trajectory sample_trajectory(const E& env, const P& policy, Rng& rng) {
  Trajectory t;
  Vec s = env.initial_state(rng);
  for (std::size_t n = 0;; ++n) {
    const bool terminal = env.is_terminal(s);
    const bool capped = !terminal && n >= env.max_steps();
    Vec a = detail::policy_act(policy, s, rng);
    const Vec a_exec = detail::executed_action(env, a);
    t.rewards.push_back(env.reward(s, a_exec));
    t.actions.push_back(std::move(a));
    if (terminal || capped) {
      t.states.push_back(std::move(s));
      t.hitting_step = n;
      t.censored = capped;
      break;
    }
    Vec noise;
    Vec next = env.step(s, a_exec, rng, noise);
    t.states.push_back(std::move(s));
    if (!noise.empty()) t.noises.push_back(std::move(noise));
    s = std::move(next);
  }
  return t;
}

}  // namespace rtrl
