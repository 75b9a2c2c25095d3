#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/env.hpp"
#include "rtrl/estimators.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

// Central finite differences of a scalar function of a flat parameter vector.
template <typename F>
Vec finite_difference_grad(F&& f, Vec params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_grad: eps must be positive");
  Vec grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + eps;
    const double fp = f(params);
    params[i] = orig - eps;
    const double fm = f(params);
    params[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_difference_grad: non-finite function value");
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

namespace detail {

// Dense solve by Gaussian elimination with partial pivoting; a (n x n,
// row-major), b of length n. Plenty for the <= 8-state chains used here.
inline Vec solve_dense(Vec a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-14)
      throw std::runtime_error("solve_dense: singular system (terminal state unreachable?)");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= a[r * n + c] * x[c];
    x[r] = s / a[r * n + r];
  }
  return x;
}

}  // namespace detail

// Small absorbing Markov decision process used as an exactly solvable
// verification scaffold. The terminal state is the last index by convention;
// it must be absorbing with zero reward. States and actions travel through
// the shared estimator code paths as one-dimensional index vectors.
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // [s][a][s'], row-major
  std::vector<double> reward_table;  // [s][a]
  Vec rho0;                          // over transient states 0..n_states-2
  std::size_t step_cap = 1'000'000;

  std::size_t terminal() const { return n_states - 1; }
  std::size_t n_transient() const { return n_states - 1; }

  double p(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  double r(std::size_t s, std::size_t a) const { return reward_table[s * n_actions + a]; }

  void validate() const {
    if (n_states < 2 || n_actions < 1) throw ConfigError("tabular mdp: need >= 2 states, >= 1 action");
    if (transition.size() != n_states * n_actions * n_states ||
        reward_table.size() != n_states * n_actions || rho0.size() != n_transient())
      throw ConfigError("tabular mdp: table size mismatch");
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a) {
        double row = 0.0;
        for (std::size_t s2 = 0; s2 < n_states; ++s2) row += p(s, a, s2);
        if (std::abs(row - 1.0) > 1e-12) throw ConfigError("tabular mdp: transition row does not sum to 1");
      }
    for (std::size_t a = 0; a < n_actions; ++a) {
      if (p(terminal(), a, terminal()) != 1.0) throw ConfigError("tabular mdp: terminal state not absorbing");
      if (r(terminal(), a) != 0.0) throw ConfigError("tabular mdp: terminal reward must be zero");
    }
    double mass = 0.0;
    for (double x : rho0) mass += x;
    if (std::abs(mass - 1.0) > 1e-12) throw ConfigError("tabular mdp: rho0 does not sum to 1");
  }

  // Environment concept: states and actions are 1-d vectors holding indices.
  std::size_t state_dim() const { return 1; }
  std::size_t action_dim() const { return 1; }
  std::size_t max_steps() const { return step_cap; }
  bool is_terminal(const Vec& s) const { return static_cast<std::size_t>(s[0]) == terminal(); }
  double reward(const Vec& s, const Vec& a) const {
    return r(static_cast<std::size_t>(s[0]), static_cast<std::size_t>(a[0]));
  }
  Vec step(const Vec& s, const Vec& a, Rng& rng, Vec& noise) const {
    noise.clear();
    const std::size_t si = static_cast<std::size_t>(s[0]);
    const std::size_t ai = static_cast<std::size_t>(a[0]);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double cdf = 0.0;
    const double draw = u(rng);
    for (std::size_t s2 = 0; s2 < n_states; ++s2) {
      cdf += p(si, ai, s2);
      if (draw < cdf) return {static_cast<double>(s2)};
    }
    return {static_cast<double>(n_states - 1)};
  }
  Vec initial_state(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double cdf = 0.0;
    const double draw = u(rng);
    for (std::size_t s = 0; s < rho0.size(); ++s) {
      cdf += rho0[s];
      if (draw < cdf) return {static_cast<double>(s)};
    }
    return {static_cast<double>(rho0.size() - 1)};
  }
};

// Categorical policy pi(s, a) = softmax(logits[s])_a over transient states.
// At the terminal state the action is a reward-inert dummy with zero score.
// Models the same score-function interface as the Gaussian policy, so the
// Monte Carlo estimators run unchanged on the tabular scaffold.
struct SoftmaxTabularPolicy {
  std::size_t n_transient = 0;
  std::size_t n_actions = 0;
  Vec logits;  // [s][a] row-major over transient states

  std::size_t param_count() const { return n_transient * n_actions; }
  Vec flatten() const { return logits; }
  void unflatten(const Vec& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("SoftmaxTabularPolicy::unflatten: length mismatch");
    logits = flat;
  }

  Vec probs(std::size_t s) const {
    Vec p(n_actions);
    double mx = logits[s * n_actions];
    for (std::size_t a = 1; a < n_actions; ++a) mx = std::max(mx, logits[s * n_actions + a]);
    double z = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      p[a] = std::exp(logits[s * n_actions + a] - mx);
      z += p[a];
    }
    for (double& x : p) x /= z;
    return p;
  }

  Vec sample_action(const Vec& state, Rng& rng) const {
    const auto s = static_cast<std::size_t>(state[0]);
    if (s >= n_transient) return {0.0};
    const Vec p = probs(s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(rng);
    double cdf = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      cdf += p[a];
      if (draw < cdf) return {static_cast<double>(a)};
    }
    return {static_cast<double>(n_actions - 1)};
  }

  double log_prob(const Vec& state, const Vec& action) const {
    const auto s = static_cast<std::size_t>(state[0]);
    if (s >= n_transient) return 0.0;
    return std::log(probs(s)[static_cast<std::size_t>(action[0])]);
  }

  // d log pi(s, a) / d logits[s'][a'] = 1{s' = s} (1{a' = a} - pi(s, a')).
  Vec grad_log_prob(const Vec& state, const Vec& action) const {
    Vec g(param_count(), 0.0);
    const auto s = static_cast<std::size_t>(state[0]);
    if (s >= n_transient) return g;
    const auto a = static_cast<std::size_t>(action[0]);
    const Vec p = probs(s);
    for (std::size_t a2 = 0; a2 < n_actions; ++a2) g[s * n_actions + a2] = -p[a2];
    g[s * n_actions + a] += 1.0;
    return g;
  }
};

namespace detail {

struct PolicyAveragedChain {
  Vec p_tt;  // transient-to-transient transition matrix, row-major
  Vec r_pi;  // expected one-step reward per transient state
};

inline PolicyAveragedChain policy_averaged_chain(const TabularMdp& mdp,
                                                 const SoftmaxTabularPolicy& policy) {
  const std::size_t nt = mdp.n_transient();
  PolicyAveragedChain c;
  c.p_tt.assign(nt * nt, 0.0);
  c.r_pi.assign(nt, 0.0);
  for (std::size_t s = 0; s < nt; ++s) {
    const Vec pi = policy.probs(s);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      c.r_pi[s] += pi[a] * mdp.r(s, a);
      for (std::size_t s2 = 0; s2 < nt; ++s2) c.p_tt[s * nt + s2] += pi[a] * mdp.p(s, a, s2);
    }
  }
  return c;
}

}  // namespace detail

// Solves the Bellman system V = r_pi + P_pi V on the transient states and
// returns rho0 . V, the exact expected return.
inline double exact_expected_return(const TabularMdp& mdp, const SoftmaxTabularPolicy& policy) {
  const std::size_t nt = mdp.n_transient();
  const auto chain = detail::policy_averaged_chain(mdp, policy);
  Vec a(nt * nt, 0.0);
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < nt; ++j) a[i * nt + j] = (i == j ? 1.0 : 0.0) - chain.p_tt[i * nt + j];
  const Vec v = detail::solve_dense(std::move(a), chain.r_pi);
  return dot(mdp.rho0, v);
}

// Enumeration oracle for the policy gradient: central differences of the
// exactly solved expected return over the softmax logits.
inline Vec exact_policy_gradient(const TabularMdp& mdp, const SoftmaxTabularPolicy& policy,
                                 double eps = 1e-6) {
  SoftmaxTabularPolicy perturbed = policy;
  return finite_difference_grad(
      [&](const Vec& theta) {
        perturbed.unflatten(theta);
        return exact_expected_return(mdp, perturbed);
      },
      policy.flatten(), eps);
}

// Solves T = 1 + P_pi T on the transient states; returns rho0 . T + 1, which
// equals E[N] + 1 (the terminal visit included, Z of the occupancy measure).
inline double exact_expected_hitting_time(const TabularMdp& mdp,
                                          const SoftmaxTabularPolicy& policy) {
  const std::size_t nt = mdp.n_transient();
  const auto chain = detail::policy_averaged_chain(mdp, policy);
  Vec a(nt * nt, 0.0);
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < nt; ++j) a[i * nt + j] = (i == j ? 1.0 : 0.0) - chain.p_tt[i * nt + j];
  const Vec t = detail::solve_dense(std::move(a), Vec(nt, 1.0));
  return dot(mdp.rho0, t) + 1.0;
}

struct Lemma1Result {
  double geometric_estimate = 0.0;
  double discounted_estimate = 0.0;
  double combined_se = 0.0;
};

// Monte Carlo check of the geometric-horizon / discounting equivalence:
// K rollouts truncated at independent Geom(1 - gamma) horizons against
// K discounted rollouts truncated where gamma^n < 1e-12.
template <Environment E, typename P>
Lemma1Result lemma1_check(const E& env, const P& policy, double gamma, std::size_t K, Rng& rng) {
  if (!(gamma > 0.0) || !(gamma < 1.0)) throw std::invalid_argument("lemma1_check: gamma in (0,1)");
  Vec geom(K), disc(K);
  for (std::size_t k = 0; k < K; ++k) geom[k] = geometric_horizon_return(env, policy, gamma, rng);

  const auto cutoff = static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(gamma)));
  for (std::size_t k = 0; k < K; ++k) {
    Vec s = env.initial_state(rng);
    double sum = 0.0, discount = 1.0;
    for (std::size_t n = 0; n <= cutoff; ++n) {
      if (env.is_terminal(s)) break;
      const Vec a = detail::policy_act(policy, s, rng);
      const Vec a_exec = detail::executed_action(env, a);
      sum += discount * env.reward(s, a_exec);
      discount *= gamma;
      if (n == cutoff) break;
      Vec noise;
      s = env.step(s, a_exec, rng, noise);
    }
    disc[k] = sum;
  }

  Lemma1Result res;
  res.geometric_estimate = mean(geom);
  res.discounted_estimate = mean(disc);
  const double se_g = standard_error(geom);
  const double se_d = standard_error(disc);
  res.combined_se = std::sqrt(se_g * se_g + se_d * se_d);
  return res;
}

}  // namespace rtrl
