#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rtrl/mlp.hpp"
#include "rtrl/oracle.hpp"
#include "rtrl/policy.hpp"
#include "rtrl/rng.hpp"

using namespace rtrl;

namespace {

// Independent re-implementation of the forward pass, kept deliberately naive.
Vec reference_forward(const MlpParams& p, const Vec& x) {
  Vec h = x;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::size_t rows = p.layer_dims[l + 1], cols = p.layer_dims[l];
    Vec z(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      z[i] = p.biases[l][i];
      for (std::size_t j = 0; j < cols; ++j) z[i] += p.weights[l][i * cols + j] * h[j];
    }
    if (l + 1 < p.num_layers())
      for (double& v : z) v = std::tanh(v);
    h = z;
  }
  return h;
}

double rel_error(const Vec& a, const Vec& b) {
  Vec diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  return l2_norm(diff) / std::max(l2_norm(b), 1e-300);
}

Vec random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("init_mlp rejects invalid layer lists") {
  Rng rng(1);
  CHECK_THROWS_AS(init_mlp({}, rng), ConfigError);
  CHECK_THROWS_AS(init_mlp({4}, rng), ConfigError);
  CHECK_THROWS_AS(init_mlp({4, 0, 2}, rng), ConfigError);
}

TEST_CASE("init_mlp final layer entries within +-5e-3") {
  Rng rng(7);
  const MlpParams p = init_mlp({3, 16, 2}, rng);
  for (double w : p.weights.back()) CHECK(std::abs(w) <= 5e-3);
  for (double b : p.biases.back()) CHECK(std::abs(b) <= 5e-3);
}

TEST_CASE("init_mlp is deterministic for a fixed seed") {
  Rng a(42), b(42);
  const MlpParams pa = init_mlp({2, 8, 1}, a);
  const MlpParams pb = init_mlp({2, 8, 1}, b);
  CHECK(pa.flatten() == pb.flatten());
}

TEST_CASE("mlp_forward on elementary nets") {
  Rng rng(3);
  MlpParams p = init_mlp({2, 4, 3}, rng);
  for (auto& w : p.weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : p.biases) std::fill(b.begin(), b.end(), 0.0);
  CHECK(mlp_forward(p, {0.3, -0.7}) == Vec{0.0, 0.0, 0.0});

  MlpParams affine;
  affine.layer_dims = {1, 1};
  affine.weights = {{2.0}};
  affine.biases = {{1.0}};
  CHECK(mlp_forward(affine, {3.0})[0] == Catch::Approx(7.0).margin(0));
}

TEST_CASE("mlp_forward matches an independent reference on random nets") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams p = init_mlp({3, 8, 6, 2}, rng);
    const Vec x = random_vec(3, rng);
    const Vec got = mlp_forward(p, x);
    const Vec want = reference_forward(p, x);
    REQUIRE(rel_error(got, want) < 1e-14);
  }
}

TEST_CASE("mlp_forward rejects dimension mismatch") {
  Rng rng(5);
  const MlpParams p = init_mlp({3, 4, 2}, rng);
  CHECK_THROWS_AS(mlp_forward(p, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("flatten/unflatten round-trips") {
  Rng rng(13);
  MlpParams p = init_mlp({4, 5, 3}, rng);
  const Vec flat = p.flatten();
  MlpParams q = p;
  q.unflatten(flat);
  CHECK(q.flatten() == flat);

  GaussianPolicy g = init_gaussian_policy({3, 6, 2}, rng);
  const Vec gflat = g.flatten();
  GaussianPolicy g2 = g;
  g2.unflatten(gflat);
  CHECK(g2.flatten() == gflat);
  CHECK(gflat.size() == g.param_count());
}

TEST_CASE("vjp_policy matches finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = init_mlp({2, 6, 5, 2}, rng);
    // random interior weights make the check non-trivial
    Vec flat = random_vec(p.param_count(), rng, 0.8);
    p.unflatten(flat);
    const Vec x = random_vec(2, rng);
    const Vec v = random_vec(2, rng);

    const Vec analytic = vjp_policy(p, x, v);
    MlpParams scratch = p;
    const Vec fd = finite_difference_grad(
        [&](const Vec& theta) {
          scratch.unflatten(theta);
          return dot(mlp_forward(scratch, x), v);
        },
        flat, 1e-5);
    REQUIRE(rel_error(analytic, fd) < 1e-6);
  }
}

TEST_CASE("vjp_policy is linear in the seed and zero at v = 0") {
  Rng rng(19);
  MlpParams p = init_mlp({3, 7, 2}, rng);
  p.unflatten(random_vec(p.param_count(), rng, 0.5));
  const Vec x = random_vec(3, rng);

  const Vec zero = vjp_policy(p, x, {0.0, 0.0});
  CHECK(l2_norm(zero) == 0.0);

  const Vec v1 = random_vec(2, rng), v2 = random_vec(2, rng);
  Vec v12(2);
  for (int i = 0; i < 2; ++i) v12[i] = v1[i] + v2[i];
  const Vec g1 = vjp_policy(p, x, v1);
  const Vec g2 = vjp_policy(p, x, v2);
  const Vec g12 = vjp_policy(p, x, v12);
  for (std::size_t i = 0; i < g12.size(); ++i)
    CHECK(g12[i] == Catch::Approx(g1[i] + g2[i]).margin(1e-12));
}

TEST_CASE("deterministic_action equals mlp_forward and respects the init bound") {
  Rng rng(23);
  const MlpParams p = init_mlp({2, 16, 1}, rng);
  const Vec s{0.4, -0.02};
  CHECK(deterministic_action(p, s) == mlp_forward(p, s));
  // |out| <= 5e-3 (1 + fan-in) since tanh activations are bounded by 1
  const double bound = 5e-3 * (1.0 + 16.0);
  CHECK(std::abs(deterministic_action(p, s)[0]) <= bound);
}

TEST_CASE("gaussian stddev is strictly positive and near 1 at init") {
  Rng rng(29);
  GaussianPolicy g = init_gaussian_policy({2, 32, 1}, rng);
  const Vec s{0.1, -0.03};
  for (double sd : g.stddev(s)) {
    CHECK(sd > 0.0);
    CHECK(std::abs(sd - 1.0) < 0.25);
  }
  // exactly zero pre-activation maps to exactly 1
  std::fill(g.std_w.begin(), g.std_w.end(), 0.0);
  std::fill(g.std_b.begin(), g.std_b.end(), 0.0);
  CHECK(g.stddev(s)[0] == 1.0);

  // the output map stays positive even for very negative pre-activations
  g.std_b[0] = -40.0;
  CHECK(g.stddev(s)[0] > 0.0);
}

TEST_CASE("gaussian_log_prob closed forms") {
  Rng rng(31);
  GaussianPolicy g = init_gaussian_policy({1, 1}, rng);
  // trunk-less affine heads: force mean = 0, std = 1
  std::fill(g.mean_w.begin(), g.mean_w.end(), 0.0);
  std::fill(g.mean_b.begin(), g.mean_b.end(), 0.0);
  std::fill(g.std_w.begin(), g.std_w.end(), 0.0);
  std::fill(g.std_b.begin(), g.std_b.end(), 0.0);
  const Vec s{0.7};
  CHECK(g.log_prob(s, {0.0}) == Catch::Approx(-0.9189385332046727).epsilon(1e-12));
  CHECK(g.log_prob(s, {1.0}) == Catch::Approx(-0.9189385332046727 - 0.5).epsilon(1e-12));
  // mode at the mean
  CHECK(g.log_prob(s, {0.0}) > g.log_prob(s, {0.3}));
  CHECK(g.log_prob(s, {0.0}) > g.log_prob(s, {-0.2}));
}

TEST_CASE("gaussian sample reproduces mean + std * z") {
  Rng rng(37);
  GaussianPolicy g = init_gaussian_policy({2, 8, 2}, rng);
  g.unflatten(random_vec(g.param_count(), rng, 0.4));
  const Vec s{0.3, -0.8};
  Rng draw(99);
  const auto [a, z] = g.sample(s, draw);
  const auto f = g.forward(s);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(a[i] == Catch::Approx(f.mean[i] + f.stddev[i] * z[i]).margin(1e-15));
}

TEST_CASE("gaussian sample empirical mean approaches mean(s)") {
  Rng rng(41);
  GaussianPolicy g = init_gaussian_policy({2, 8, 1}, rng);
  g.unflatten(random_vec(g.param_count(), rng, 0.4));
  const Vec s{-0.2, 0.5};
  const auto f = g.forward(s);
  const std::size_t n = 100'000;
  Vec draws(n);
  Rng sampler(4242);
  for (std::size_t i = 0; i < n; ++i) draws[i] = g.sample_action(s, sampler)[0];
  const double se = standard_error(draws);
  CHECK(std::abs(mean(draws) - f.mean[0]) < 4.0 * se);
}

TEST_CASE("grad_log_prob matches finite differences") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    GaussianPolicy g = init_gaussian_policy({2, 5, 4, 2}, rng);
    g.unflatten(random_vec(g.param_count(), rng, 0.5));
    const Vec s = random_vec(2, rng);
    const Vec a = random_vec(2, rng, 1.5);

    const Vec analytic = g.grad_log_prob(s, a);
    GaussianPolicy scratch = g;
    const Vec fd = finite_difference_grad(
        [&](const Vec& theta) {
          scratch.unflatten(theta);
          return scratch.log_prob(s, a);
        },
        g.flatten(), 1e-5);
    REQUIRE(rel_error(analytic, fd) < 1e-6);
  }
}

TEST_CASE("grad_log_prob works without a trunk") {
  Rng rng(47);
  GaussianPolicy g = init_gaussian_policy({2, 1}, rng);
  g.unflatten(random_vec(g.param_count(), rng, 0.6));
  const Vec s{0.4, -0.9};
  const Vec a{0.7};
  GaussianPolicy scratch = g;
  const Vec fd = finite_difference_grad(
      [&](const Vec& theta) {
        scratch.unflatten(theta);
        return scratch.log_prob(s, a);
      },
      g.flatten(), 1e-5);
  REQUIRE(rel_error(g.grad_log_prob(s, a), fd) < 1e-6);
}

TEST_CASE("score-function identity: E[grad_log_prob] = 0 under the policy") {
  Rng rng(53);
  GaussianPolicy g = init_gaussian_policy({2, 6, 1}, rng);
  g.unflatten(random_vec(g.param_count(), rng, 0.3));
  const Vec s{0.25, -0.4};

  const std::size_t n = 100'000;
  const std::size_t p = g.param_count();
  std::vector<Vec> per_coord(p);  // sample values per coordinate
  for (auto& v : per_coord) v.reserve(n);
  Rng sampler(777);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec a = g.sample_action(s, sampler);
    const Vec grad = g.grad_log_prob(s, a);
    for (std::size_t j = 0; j < p; ++j) per_coord[j].push_back(grad[j]);
  }
  for (std::size_t j = 0; j < p; ++j) {
    const double m = mean(per_coord[j]);
    const double se = standard_error(per_coord[j]);
    if (se == 0.0) {
      CHECK(m == 0.0);  // parameters with no influence at this state
    } else {
      CHECK(std::abs(m) < 4.0 * se);
    }
  }
}
