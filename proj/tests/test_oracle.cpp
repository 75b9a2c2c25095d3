#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rtrl/oracle.hpp"

using namespace rtrl;

namespace {

// Single transient state; terminates with probability q per step, reward
// `reward` on every transient step.
TabularMdp single_state_chain(double q, double reward) {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.transition = {1.0 - q, q,   // transient
                    0.0, 1.0};    // terminal (absorbing)
  mdp.reward_table = {reward, 0.0};
  mdp.rho0 = {1.0};
  mdp.validate();
  return mdp;
}

SoftmaxTabularPolicy uniform_policy(const TabularMdp& mdp) {
  SoftmaxTabularPolicy p;
  p.n_transient = mdp.n_transient();
  p.n_actions = mdp.n_actions;
  p.logits.assign(p.param_count(), 0.0);
  return p;
}

// Two transient states, two actions with distinct transition/reward rows;
// kept fixed so oracle values are stable across runs.
TabularMdp two_state_mdp() {
  TabularMdp mdp;
  mdp.n_states = 3;
  mdp.n_actions = 2;
  mdp.transition = {
      // state 0
      0.5, 0.3, 0.2,   // action 0
      0.1, 0.5, 0.4,   // action 1
      // state 1
      0.2, 0.3, 0.5,   // action 0
      0.6, 0.1, 0.3,   // action 1
      // terminal
      0.0, 0.0, 1.0,
      0.0, 0.0, 1.0,
  };
  mdp.reward_table = {-1.0, -0.4, -0.7, -1.5, 0.0, 0.0};
  mdp.rho0 = {0.7, 0.3};
  mdp.validate();
  return mdp;
}

struct ConstRewardEnv {
  double value = 1.0;
  std::size_t state_dim() const { return 1; }
  std::size_t action_dim() const { return 1; }
  std::size_t max_steps() const { return 1'000'000'000; }
  bool is_terminal(const Vec&) const { return false; }
  double reward(const Vec&, const Vec&) const { return value; }
  Vec step(const Vec& s, const Vec&, Rng&, Vec& noise) const {
    noise.clear();
    return s;
  }
  Vec initial_state(Rng&) const { return {0.0}; }
};

struct NullPolicy {
  Vec action(const Vec&) const { return {0.0}; }
};

}  // namespace

TEST_CASE("finite differences on elementary functions") {
  const Vec six = finite_difference_grad([](const Vec& x) { return x[0] * x[0]; }, {3.0}, 1e-5);
  CHECK(six[0] == Catch::Approx(6.0).margin(1e-9));

  const Vec zero = finite_difference_grad([](const Vec&) { return 4.2; }, {1.0, -2.0}, 1e-5);
  CHECK(zero == Vec{0.0, 0.0});

  const double eps = 1e-4;
  const Vec cosine = finite_difference_grad([](const Vec& x) { return std::sin(x[0]); }, {0.0}, eps);
  CHECK(std::abs(cosine[0] - 1.0) <= eps * eps);

  CHECK_THROWS(finite_difference_grad(
      [](const Vec& x) { return std::log(x[0]); }, {0.0}, 1e-5));
}

TEST_CASE("tabular mdp validation") {
  TabularMdp bad = single_state_chain(0.5, -1.0);
  bad.transition[0] = 0.9;  // row no longer sums to 1
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  TabularMdp leaky = single_state_chain(0.5, -1.0);
  leaky.reward_table[1] = -0.1;  // reward at terminal
  CHECK_THROWS_AS(leaky.validate(), ConfigError);
}

TEST_CASE("exact expected return on geometric chains") {
  const auto policy_of = [](const TabularMdp& m) { return uniform_policy(m); };

  const TabularMdp half = single_state_chain(0.5, -1.0);
  CHECK(exact_expected_return(half, policy_of(half)) == Catch::Approx(-2.0).epsilon(1e-12));

  const TabularMdp zero_reward = single_state_chain(0.3, 0.0);
  CHECK(exact_expected_return(zero_reward, policy_of(zero_reward)) == Catch::Approx(0.0).margin(1e-15));

  const TabularMdp immediate = single_state_chain(1.0, -1.0);
  CHECK(exact_expected_return(immediate, policy_of(immediate)) == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("exact expected return fails when terminal is unreachable") {
  TabularMdp mdp = single_state_chain(0.5, -1.0);
  mdp.transition = {1.0, 0.0, 0.0, 1.0};  // never leaves the transient state
  CHECK_THROWS(exact_expected_return(mdp, uniform_policy(mdp)));
}

TEST_CASE("exact policy gradient vanishes for symmetric actions") {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.transition = {0.4, 0.6, 0.4, 0.6, 0.0, 1.0, 0.0, 1.0};  // identical action rows
  mdp.reward_table = {-1.0, -1.0, 0.0, 0.0};
  mdp.rho0 = {1.0};
  mdp.validate();
  const Vec g = exact_policy_gradient(mdp, uniform_policy(mdp));
  for (double x : g) CHECK(std::abs(x) < 1e-9);
}

TEST_CASE("exact policy gradient is stable across evaluations") {
  const TabularMdp mdp = two_state_mdp();
  SoftmaxTabularPolicy policy = uniform_policy(mdp);
  policy.logits = {0.2, -0.1, 0.4, 0.3};
  const Vec a = exact_policy_gradient(mdp, policy);
  const Vec b = exact_policy_gradient(mdp, policy);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
}

TEST_CASE("exact policy gradient matches the analytic softmax form on a one-state mdp") {
  // both actions terminate immediately; J = pi_0 r_0 + pi_1 r_1,
  // dJ/dtheta_a = pi_a (r_a - J)
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.transition = {0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0};
  mdp.reward_table = {-2.0, -0.5, 0.0, 0.0};
  mdp.rho0 = {1.0};
  mdp.validate();

  SoftmaxTabularPolicy policy = uniform_policy(mdp);
  policy.logits = {0.3, -0.6};
  const Vec probs = policy.probs(0);
  const double j = probs[0] * -2.0 + probs[1] * -0.5;
  const Vec analytic = {probs[0] * (-2.0 - j), probs[1] * (-0.5 - j)};
  const Vec fd = exact_policy_gradient(mdp, policy);
  for (std::size_t i = 0; i < 2; ++i) CHECK(fd[i] == Catch::Approx(analytic[i]).margin(1e-8));
}

TEST_CASE("exact expected hitting time") {
  const TabularMdp half = single_state_chain(0.5, -1.0);
  CHECK(exact_expected_hitting_time(half, uniform_policy(half)) == Catch::Approx(3.0).epsilon(1e-12));

  const TabularMdp immediate = single_state_chain(1.0, -1.0);
  CHECK(exact_expected_hitting_time(immediate, uniform_policy(immediate)) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("monte carlo hitting times match the linear-algebra oracle") {
  const TabularMdp mdp = two_state_mdp();
  const SoftmaxTabularPolicy policy = uniform_policy(mdp);
  const double exact = exact_expected_hitting_time(mdp, policy);

  const std::size_t K = 100'000;
  Vec z(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng = derive_stream(2024, seed_tag::trajectory, 0, k);
    z[k] = static_cast<double>(sample_trajectory(mdp, policy, rng).hitting_step) + 1.0;
  }
  const double se = standard_error(z);
  CHECK(std::abs(mean(z) - exact) < 3.0 * se);
}

TEST_CASE("monte carlo returns match the exact expected return") {
  const TabularMdp mdp = two_state_mdp();
  SoftmaxTabularPolicy policy = uniform_policy(mdp);
  policy.logits = {0.5, -0.2, 0.0, 0.1};
  const double exact = exact_expected_return(mdp, policy);

  const std::size_t K = 200'000;
  Vec totals(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng = derive_stream(77, seed_tag::trajectory, 1, k);
    totals[k] = returns_from_trajectory(sample_trajectory(mdp, policy, rng)).total;
  }
  const double se = standard_error(totals);
  CHECK(std::abs(mean(totals) - exact) < 4.0 * se);
}

TEST_CASE("lemma 1: constant reward stream") {
  const ConstRewardEnv env;
  const NullPolicy policy;
  Rng rng(11);
  const auto res = lemma1_check(env, policy, 0.5, 20'000, rng);
  // E[N_gamma] + 1 = 1/(1-gamma) = 2; the discounted side is deterministic
  CHECK(res.discounted_estimate == Catch::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(res.geometric_estimate - 2.0) < 3.0 * res.combined_se);
  CHECK(std::abs(res.geometric_estimate - res.discounted_estimate) < 3.0 * res.combined_se);
}

TEST_CASE("lemma 1: zero reward stream is exactly zero") {
  const ConstRewardEnv env{0.0};
  const NullPolicy policy;
  Rng rng(12);
  const auto res = lemma1_check(env, policy, 0.9, 1'000, rng);
  CHECK(res.geometric_estimate == 0.0);
  CHECK(res.discounted_estimate == 0.0);
}

TEST_CASE("lemma 1: tabular chain against the closed form") {
  // single-state chain, q = 0.5, reward -1, gamma = 0.9:
  // V = -1 + gamma (1-q) V  =>  V = -1 / (1 - 0.45)
  const TabularMdp mdp = single_state_chain(0.5, -1.0);
  const SoftmaxTabularPolicy policy = uniform_policy(mdp);
  const double closed_form = -1.0 / (1.0 - 0.45);
  Rng rng(13);
  const auto res = lemma1_check(mdp, policy, 0.9, 50'000, rng);
  CHECK(std::abs(res.geometric_estimate - res.discounted_estimate) < 3.0 * res.combined_se);
  CHECK(std::abs(res.discounted_estimate - closed_form) < 4.0 * res.combined_se);
  CHECK(std::abs(res.geometric_estimate - closed_form) < 4.0 * res.combined_se);
}
