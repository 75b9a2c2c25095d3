#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "rtrl/common.hpp"
#include "rtrl/env.hpp"
#include "rtrl/estimators.hpp"
#include "rtrl/oracle.hpp"
#include "rtrl/policy.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

enum class EstimatorKind {
  trajectory_pg,
  state_space_pg,
  state_space_pg_biased,
  trajectory_dpg,
  state_space_dpg,
  state_space_dpg_biased,
};

inline bool estimator_is_biased(EstimatorKind k) {
  return k == EstimatorKind::state_space_pg_biased || k == EstimatorKind::state_space_dpg_biased;
}

inline bool estimator_is_deterministic(EstimatorKind k) {
  return k == EstimatorKind::trajectory_dpg || k == EstimatorKind::state_space_dpg ||
         k == EstimatorKind::state_space_dpg_biased;
}

enum class PolicyKind { gaussian, deterministic };
enum class CheckpointFormat { json, binary };

using EnvSpec = std::variant<MountainCar, DoubleWell>;
using PolicyVariant = std::variant<GaussianPolicy, MlpParams>;

struct OccupancyExport {
  std::pair<std::size_t, std::size_t> coords{0, 1};
  GridSpec grid{-2.0, 2.0, -2.0, 2.0, 50, 50};
  std::size_t rollouts = 100;
};

struct ExperimentConfig {
  EnvSpec env = DoubleWell{};
  PolicyKind policy_kind = PolicyKind::gaussian;
  std::vector<std::size_t> layers;  // d_0 .. d_L including input and output
  EstimatorKind estimator = EstimatorKind::trajectory_pg;
  PgVariant pg_variant = PgVariant::reward_to_go;
  DpgVariant dpg_variant = DpgVariant::reward_to_go_next;
  Baseline::Kind baseline = Baseline::Kind::none;
  double m_fraction = 1.0;
  std::size_t trajectories_per_iter = 100;  // K
  std::size_t iterations = 1;               // I
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t checkpoint_every = 500;
  CheckpointFormat checkpoint_format = CheckpointFormat::json;
  bool record_wall_time = false;  // measured time breaks byte-reproducibility
  std::string output_dir;
  std::optional<OccupancyExport> occupancy;

  void validate() const {
    if (trajectories_per_iter < 1) throw ConfigError("train.k: must be >= 1");
    if (iterations < 1) throw ConfigError("train.iterations: must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.lr: must be positive");
    if (workers < 1) throw ConfigError("train.workers: must be >= 1");
    if (!(m_fraction > 0.0) || m_fraction > 1.0)
      throw ConfigError("estimator.m_fraction: must be in (0, 1]");
    if (layers.size() < 2) throw ConfigError("policy.layers: need at least [d_in, d_out]");
    for (std::size_t d : layers)
      if (d == 0) throw ConfigError("policy.layers: zero-width layer");

    const bool det_estimator = estimator_is_deterministic(estimator);
    if (det_estimator && policy_kind != PolicyKind::deterministic)
      throw ConfigError("estimator.kind: deterministic policy gradients require policy.kind = deterministic");
    if (!det_estimator && policy_kind != PolicyKind::gaussian)
      throw ConfigError("estimator.kind: stochastic policy gradients require policy.kind = gaussian");
    if (det_estimator && !std::holds_alternative<DoubleWell>(env))
      throw ConfigError("estimator.kind: model-based deterministic gradients require env.kind = double_well");
    if (baseline != Baseline::Kind::none && estimator != EstimatorKind::trajectory_pg)
      throw ConfigError("estimator.baseline: only supported for estimator.kind = trajectory_pg");

    const std::size_t ds = std::visit([](const auto& e) { return e.state_dim(); }, env);
    const std::size_t da = std::visit([](const auto& e) { return e.action_dim(); }, env);
    if (layers.front() != ds) throw ConfigError("policy.layers: first entry must equal the state dimension");
    if (layers.back() != da) throw ConfigError("policy.layers: last entry must equal the action dimension");
    if (std::holds_alternative<DoubleWell>(env)) std::get<DoubleWell>(env).validate();
  }
};

struct MetricsRow {
  std::size_t iter = 0;
  double mean_return = 0.0;
  double mean_hitting_time = 0.0;
  double z_hat = 0.0;
  double effective_lr = 0.0;
  double grad_norm = 0.0;
  double censor_rate = 0.0;
  double wall_time_s = 0.0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
};

// The rate at which the applied update tracks the true gradient: the biased
// state-space estimators omit the factor E[N+1], so their updates act like
// gradient ascent with rate lr / z_hat.
inline double effective_lr(double lr, double z_hat, bool biased) {
  return biased ? lr / z_hat : lr;
}

// Plain gradient-ascent update on the flat parameter vector.
template <typename Params>
Params sgd_step(const Params& params, const Vec& grad, double lr) {
  Vec flat = params.flatten();
  if (flat.size() != grad.size()) throw std::invalid_argument("sgd_step: gradient length mismatch");
  axpy(lr, grad, flat);
  if (!all_finite(flat)) throw DivergenceError("sgd_step: non-finite parameter update");
  Params out = params;
  out.unflatten(flat);
  return out;
}

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_row;
  std::function<void(std::size_t iter, const PolicyVariant&)> on_checkpoint;
};

namespace detail {

// Samples trajectory k with its own stream (seed, iteration, k); the fan-out
// over worker threads cannot change any result, only the wall time.
template <Environment E, typename P>
std::vector<Trajectory> sample_batch(const E& env, const P& policy, std::uint64_t seed,
                                     std::size_t iteration, std::size_t count,
                                     std::size_t workers) {
  std::vector<Trajectory> batch(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) {
      Rng rng = derive_stream(seed, seed_tag::trajectory, iteration, k);
      batch[k] = sample_trajectory(env, policy, rng);
    }
    return batch;
  }
  const std::size_t n_workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(n_workers);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t k = w; k < count; k += n_workers) {
          Rng rng = derive_stream(seed, seed_tag::trajectory, iteration, k);
          batch[k] = sample_trajectory(env, policy, rng);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return batch;
}

inline PolicyVariant init_policy(const ExperimentConfig& cfg) {
  Rng rng = derive_stream(cfg.seed, seed_tag::init);
  if (cfg.policy_kind == PolicyKind::gaussian)
    return init_gaussian_policy(cfg.layers, rng);
  return init_mlp(cfg.layers, rng);
}

template <Environment E>
GradientEstimate compute_gradient(const ExperimentConfig& cfg, const E& env,
                                  const PolicyVariant& policy, std::size_t iteration,
                                  const std::vector<Trajectory>& batch) {
  const bool biased = estimator_is_biased(cfg.estimator);
  switch (cfg.estimator) {
    case EstimatorKind::trajectory_pg:
      return trajectory_pg(batch, std::get<GaussianPolicy>(policy), cfg.pg_variant,
                           Baseline{cfg.baseline, nullptr});
    case EstimatorKind::state_space_pg:
    case EstimatorKind::state_space_pg_biased: {
      const auto buf = build_stochastic_buffer(batch);
      Rng rng = derive_stream(cfg.seed, seed_tag::subsample, iteration);
      return state_space_pg(buf, std::get<GaussianPolicy>(policy), estimate_z(batch),
                            cfg.m_fraction, biased, rng);
    }
    case EstimatorKind::trajectory_dpg:
      if constexpr (std::is_same_v<E, DoubleWell>)
        return trajectory_dpg(batch, std::get<MlpParams>(policy), env, cfg.dpg_variant);
      break;
    case EstimatorKind::state_space_dpg:
    case EstimatorKind::state_space_dpg_biased:
      if constexpr (std::is_same_v<E, DoubleWell>) {
        const auto buf = build_model_buffer(batch);
        Rng rng = derive_stream(cfg.seed, seed_tag::subsample, iteration);
        return state_space_dpg(buf, std::get<MlpParams>(policy), env, estimate_z(batch),
                               cfg.m_fraction, biased, rng);
      }
      break;
  }
  throw ConfigError("estimator.kind: not applicable to the configured environment");
}

template <Environment E>
RunMetrics train_on(const ExperimentConfig& cfg, const E& env, PolicyVariant& policy,
                    const TrainHooks& hooks) {
  RunMetrics metrics;
  metrics.rows.reserve(cfg.iterations);
  const bool biased = estimator_is_biased(cfg.estimator);
  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Trajectory> batch = std::visit(
        [&](const auto& p) {
          return sample_batch(env, p, cfg.seed, iter, cfg.trajectories_per_iter, cfg.workers);
        },
        policy);
    const GradientEstimate est = compute_gradient(cfg, env, policy, iter, batch);
    std::visit([&](auto& p) { p = sgd_step(p, est.grad, cfg.learning_rate); }, policy);

    MetricsRow row;
    row.iter = iter;
    row.mean_return = est.mean_return;
    row.mean_hitting_time = est.mean_hitting_time;
    row.z_hat = est.z_hat;
    row.effective_lr = effective_lr(cfg.learning_rate, est.z_hat, biased);
    row.grad_norm = est.grad_norm;
    row.censor_rate = est.censor_rate;
    if (cfg.record_wall_time) {
      const auto t1 = std::chrono::steady_clock::now();
      row.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
    }
    metrics.rows.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint &&
        (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations))
      hooks.on_checkpoint(iter, policy);
  }
  return metrics;
}

}  // namespace detail

// Runs I iterations of sample -> estimate -> ascend, emitting one metrics row
// per iteration. Deterministic for a fixed config and seed, for any worker
// count. On divergence the exception propagates after all completed rows have
// been delivered to the hooks.
inline RunMetrics train(const ExperimentConfig& cfg, const TrainHooks& hooks = {},
                        PolicyVariant* final_policy = nullptr) {
  cfg.validate();
  PolicyVariant policy = detail::init_policy(cfg);
  RunMetrics metrics = std::visit(
      [&](const auto& env) { return detail::train_on(cfg, env, policy, hooks); }, cfg.env);
  if (final_policy != nullptr) *final_policy = std::move(policy);
  return metrics;
}

// Smoothed negative expected return at the final iteration (window 100
// moving average, matching the display convention of the training curves).
inline double final_smoothed_negative_return(const RunMetrics& metrics, std::size_t window = 100) {
  if (metrics.rows.empty()) throw std::invalid_argument("no metrics rows");
  Vec neg(metrics.rows.size());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -metrics.rows[i].mean_return;
  return moving_average_at(neg, neg.size() - 1, window);
}

struct SweepCell {
  double lr = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double final_smoothed_neg_return = 0.0;
  RunMetrics metrics;
};

// Trains one run per (learning rate, repeat) with deterministically derived
// seeds. Diverged runs are recorded as failed cells; the sweep continues.
inline std::vector<SweepCell> lr_sweep(const ExperimentConfig& base, const std::vector<double>& lrs,
                                       std::size_t repeats,
                                       const std::function<void(const SweepCell&)>& on_cell = {}) {
  if (lrs.empty()) throw ConfigError("sweep: need at least one learning rate");
  if (repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  std::vector<SweepCell> cells;
  for (std::size_t li = 0; li < lrs.size(); ++li) {
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      SweepCell cell;
      cell.lr = lrs[li];
      cell.repeat = rep;
      cell.seed = derive_seed(base.seed, seed_tag::sweep, li, rep);
      ExperimentConfig cfg = base;
      cfg.learning_rate = cell.lr;
      cfg.seed = cell.seed;
      try {
        cell.metrics = train(cfg);
        cell.final_smoothed_neg_return = final_smoothed_negative_return(cell.metrics);
      } catch (const DivergenceError& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace rtrl
