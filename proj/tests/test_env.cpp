#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rtrl/env.hpp"
#include "rtrl/policy.hpp"
#include "rtrl/rng.hpp"

using namespace rtrl;

namespace {

struct ZeroPolicy {
  std::size_t dim;
  Vec action(const Vec&) const { return Vec(dim, 0.0); }
};

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  return a.states == b.states && a.actions == b.actions && a.rewards == b.rewards &&
         a.noises == b.noises && a.hitting_step == b.hitting_step && a.censored == b.censored;
}

}  // namespace

TEST_CASE("mountain car dynamics") {
  const MountainCar env;
  Rng rng(0);
  Vec noise;

  SECTION("rest at the origin drifts left") {
    const Vec next = env.step({0.0, 0.0}, {0.0}, rng, noise);
    CHECK(next[1] == Catch::Approx(-0.0025).margin(1e-15));
    CHECK(next[0] == Catch::Approx(-0.0025).margin(1e-15));
    CHECK(noise.empty());
  }

  SECTION("full throttle near the goal reaches the terminal region") {
    const Vec next = env.step({0.4, 0.05}, {1.0}, rng, noise);
    CHECK(next[1] == Catch::Approx(0.05 + 0.0015 - 0.0025 * std::cos(1.2)).epsilon(1e-12));
    CHECK(next[0] == Catch::Approx(0.4505941).margin(1e-7));
    CHECK(env.is_terminal(next));
  }

  SECTION("inelastic left wall resets velocity") {
    const Vec next = env.step({-1.2, -0.07}, {-1.0}, rng, noise);
    CHECK(next[0] == -1.2);
    CHECK(next[1] == 0.0);
  }

  SECTION("velocity clipping") {
    const Vec next = env.step({-0.5, 0.07}, {1.0}, rng, noise);
    CHECK(next[1] <= 0.07);
  }

  SECTION("non-finite input is rejected") {
    CHECK_THROWS_AS(env.step({std::nan(""), 0.0}, {0.0}, rng, noise), std::invalid_argument);
  }
}

TEST_CASE("mountain car reward and terminal set") {
  const MountainCar env;
  CHECK(env.reward({0.0, 0.0}, {1.0}) == Catch::Approx(-1.1).margin(1e-15));
  CHECK(env.reward({0.46, 0.0}, {0.7}) == 0.0);
  CHECK(env.reward({0.0, 0.0}, {0.0}) == -1.0);
  CHECK(env.is_terminal({0.45, 0.0}));
  CHECK_FALSE(env.is_terminal({0.449, 0.07}));
}

TEST_CASE("double well potential gradient") {
  DoubleWell env;
  env.dim = 3;
  env.alphas = {1.0, 2.0, 0.5};
  env.initial = FixedPoint{{-1.0, -1.0, -1.0}};
  CHECK(env.grad_potential({0.0, 0.0, 0.0}) == Vec{0.0, 0.0, 0.0});
  CHECK(env.grad_potential({1.0, 1.0, 1.0}) == Vec{0.0, 0.0, 0.0});

  DoubleWell one;
  one.dim = 1;
  one.alphas = {5.0};
  one.initial = FixedPoint{{-1.0}};
  CHECK(one.grad_potential({0.5})[0] == Catch::Approx(-7.5).epsilon(1e-14));
  CHECK_THROWS_AS(one.grad_potential({0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("langevin step") {
  DoubleWell env;  // d = 2, alpha = (1,1), sigma = sqrt(2), dt = 1e-2

  SECTION("drift vanishes at the well minimum") {
    CHECK(env.step_with_noise({1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}) == Vec{1.0, 1.0});
  }

  SECTION("noise displacement per unit increment is sigma sqrt(dt)") {
    CHECK(env.sigma * std::sqrt(env.dt) == Catch::Approx(0.1414214).margin(1e-7));
  }

  SECTION("zero drift at the origin in one dimension") {
    DoubleWell one;
    one.dim = 1;
    one.alphas = {1.0};
    one.initial = FixedPoint{{-1.0}};
    const Vec next = one.step_with_noise({0.0}, {0.0}, {1.0});
    CHECK(next[0] == Catch::Approx(one.sigma * std::sqrt(one.dt)).epsilon(1e-14));
  }

  SECTION("divergence is reported") {
    CHECK_THROWS_AS(env.step_with_noise({1e200, 0.0}, {0.0, 0.0}, {0.0, 0.0}), DivergenceError);
  }
}

TEST_CASE("double well reward") {
  const DoubleWell env;
  CHECK(env.reward({-1.0, -1.0}, {2.0, 0.0}) == Catch::Approx(-0.03).margin(1e-15));
  CHECK(env.reward({1.0, 1.0}, {0.3, 0.1}) == 0.0);
  CHECK(env.reward({-1.0, -1.0}, {0.0, 0.0}) == Catch::Approx(-0.01).margin(1e-15));
}

TEST_CASE("double well terminal set uses the first two coordinates") {
  DoubleWell env;
  env.dim = 4;
  env.alphas = {5.0, 2.0, 0.5, 0.5};
  env.initial = FixedPoint{Vec(4, -1.0)};
  CHECK(env.is_terminal({1.0, 1.0, -3.0, 0.0}));
  CHECK_FALSE(env.is_terminal({-1.0, 1.0, 1.0, 1.0}));
  CHECK_FALSE(env.is_terminal({0.1, 1.0, 1.0, 1.0}));  // restricted potential too high

  DoubleWell one;
  one.dim = 1;
  one.alphas = {1.0};
  one.initial = FixedPoint{{-1.0}};
  CHECK(one.is_terminal({1.0}));
  CHECK_FALSE(one.is_terminal({-1.0}));

  DoubleWell open = env;
  open.target_level = -1.0;  // non-terminating variant
  CHECK_FALSE(open.is_terminal({1.0, 1.0, 0.0, 0.0}));
}

TEST_CASE("sample_trajectory terminates immediately from a terminal start") {
  DoubleWell env;
  env.initial = FixedPoint{{1.0, 1.0}};
  Rng rng(1);
  const Trajectory t = sample_trajectory(env, ZeroPolicy{2}, rng);
  CHECK(t.hitting_step == 0);
  CHECK(t.rewards == Vec{0.0});
  CHECK_FALSE(t.censored);
  CHECK(t.states.size() == 1);
  CHECK(t.actions.size() == 1);
  CHECK(t.noises.empty());
}

TEST_CASE("sample_trajectory censors at the step cap") {
  DoubleWell env;
  env.step_cap = 1;
  Rng rng(2);
  const Trajectory t = sample_trajectory(env, ZeroPolicy{2}, rng);
  CHECK(t.censored);
  CHECK(t.hitting_step == 1);
  CHECK(t.states.size() == 2);
  CHECK(t.rewards.size() == 2);
  CHECK(t.rewards[1] != 0.0);
  CHECK(t.noises.size() == 1);
}

TEST_CASE("sample_trajectory is bitwise reproducible") {
  DoubleWell env;
  env.step_cap = 5'000;
  Rng init(3);
  const MlpParams policy = init_mlp({2, 8, 2}, init);
  Rng a(1234), b(1234);
  const Trajectory ta = sample_trajectory(env, policy, a);
  const Trajectory tb = sample_trajectory(env, policy, b);
  CHECK(same_trajectory(ta, tb));
}

TEST_CASE("hitting semantics and reward sign") {
  DoubleWell env;
  env.step_cap = 50'000;
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Trajectory t = sample_trajectory(env, ZeroPolicy{2}, rng);
    REQUIRE(t.states.size() == t.hitting_step + 1);
    REQUIRE(t.actions.size() == t.hitting_step + 1);
    REQUIRE(t.rewards.size() == t.hitting_step + 1);
    if (!t.censored) {
      CHECK(env.is_terminal(t.states[t.hitting_step]));
      CHECK(t.rewards[t.hitting_step] == 0.0);
    }
    for (std::size_t n = 0; n < t.hitting_step; ++n) CHECK_FALSE(env.is_terminal(t.states[n]));
    for (double r : t.rewards) CHECK(r <= 0.0);
  }
}

TEST_CASE("mountain car trajectories record no noise and clip executed actions") {
  MountainCar env;
  env.step_cap = 3'000;
  Rng init(5);
  const GaussianPolicy policy = init_gaussian_policy({2, 8, 1}, init);
  Rng rng(6);
  const Trajectory t = sample_trajectory(env, policy, rng);
  CHECK(t.noises.empty());
  for (double r : t.rewards) CHECK(r <= 0.0);
  // reward of non-terminal steps is bounded below by the clipped action range
  for (std::size_t n = 0; n < t.hitting_step; ++n) CHECK(t.rewards[n] >= -1.1);
}

TEST_CASE("langevin reconstruction identity") {
  DoubleWell env;
  env.step_cap = 20'000;
  Rng init(7);
  const MlpParams policy = init_mlp({2, 8, 2}, init);
  Rng rng(8);
  const Trajectory t = sample_trajectory(env, policy, rng);
  REQUIRE(t.noises.size() == t.hitting_step);
  const double scale = env.sigma * std::sqrt(env.dt);
  for (std::size_t n = 0; n < t.hitting_step; ++n) {
    const Vec g = env.grad_potential(t.states[n]);
    for (std::size_t i = 0; i < 2; ++i) {
      const double lhs = t.states[n + 1][i] - t.states[n][i] -
                         (t.actions[n][i] - g[i]) * env.dt;
      CHECK(lhs - scale * t.noises[n][i] == Catch::Approx(0.0).margin(1e-12));
    }
  }
}

TEST_CASE("initial state distributions") {
  Rng rng(9);
  const InitialStateDistribution fixed = FixedPoint{{-1.0, -1.0}};
  CHECK(sample_initial(fixed, rng) == Vec{-1.0, -1.0});

  const InitialStateDistribution box = UniformBox{{-0.6, 0.0}, {-0.4, 0.0}};
  for (int i = 0; i < 100; ++i) {
    const Vec s = sample_initial(box, rng);
    CHECK(s[0] >= -0.6);
    CHECK(s[0] <= -0.4);
    CHECK(s[1] == 0.0);
  }
}
