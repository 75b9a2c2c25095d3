#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtrl/trainer.hpp"

namespace rtrl {

inline constexpr const char* kVersion = "0.1.0";

// Configuration documents are JSON with a fixed key schema; unknown keys are
// rejected and every diagnostic names the offending key. A run manifest
// ({"rtrl_version": ..., "config": {...}}) is accepted wherever a config is,
// so finished runs can be reproduced from their own manifests.

namespace detail {

using json = nlohmann::json;

inline std::string join_key(const std::string& scope, const std::string& key) {
  return scope.empty() ? key : scope + "." + key;
}

inline void require_object(const json& j, const std::string& scope) {
  if (!j.is_object())
    throw ConfigError("config: key '" + scope + "' must be an object");
}

inline void check_keys(const json& obj, const std::string& scope,
                       const std::vector<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("config: unknown key '" + join_key(scope, item.key()) + "'");
  }
}

inline const json& require_key(const json& obj, const std::string& scope, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end())
    throw ConfigError("config: missing required key '" + join_key(scope, key) + "'");
  return *it;
}

inline double get_double(const json& obj, const std::string& scope, const std::string& key) {
  const json& v = require_key(obj, scope, key);
  if (!v.is_number())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be a number");
  return v.get<double>();
}

inline double get_double_or(const json& obj, const std::string& scope, const std::string& key,
                            double fallback) {
  return obj.contains(key) ? get_double(obj, scope, key) : fallback;
}

inline std::uint64_t get_uint(const json& obj, const std::string& scope, const std::string& key) {
  const json& v = require_key(obj, scope, key);
  if (!v.is_number_unsigned())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::uint64_t get_uint_or(const json& obj, const std::string& scope, const std::string& key,
                                 std::uint64_t fallback) {
  return obj.contains(key) ? get_uint(obj, scope, key) : fallback;
}

inline bool get_bool_or(const json& obj, const std::string& scope, const std::string& key,
                        bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be a boolean");
  return v.get<bool>();
}

inline std::string get_string(const json& obj, const std::string& scope, const std::string& key) {
  const json& v = require_key(obj, scope, key);
  if (!v.is_string())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be a string");
  return v.get<std::string>();
}

inline Vec get_double_array(const json& obj, const std::string& scope, const std::string& key) {
  const json& v = require_key(obj, scope, key);
  if (!v.is_array())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be an array");
  Vec out;
  for (const auto& x : v) {
    if (!x.is_number())
      throw ConfigError("config: key '" + join_key(scope, key) + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline std::vector<std::size_t> get_uint_array(const json& obj, const std::string& scope,
                                               const std::string& key) {
  const json& v = require_key(obj, scope, key);
  if (!v.is_array())
    throw ConfigError("config: key '" + join_key(scope, key) + "' must be an array");
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_unsigned())
      throw ConfigError("config: key '" + join_key(scope, key) + "' must hold non-negative integers");
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

inline InitialStateDistribution parse_initial(const json& j, const std::string& scope) {
  require_object(j, scope);
  const std::string kind = get_string(j, scope, "kind");
  if (kind == "fixed") {
    check_keys(j, scope, {"kind", "point"});
    return FixedPoint{get_double_array(j, scope, "point")};
  }
  if (kind == "uniform_box") {
    check_keys(j, scope, {"kind", "lower", "upper"});
    UniformBox box{get_double_array(j, scope, "lower"), get_double_array(j, scope, "upper")};
    if (box.lower.size() != box.upper.size())
      throw ConfigError("config: key '" + scope + ".lower' and '.upper' must have equal length");
    for (std::size_t i = 0; i < box.lower.size(); ++i)
      if (box.lower[i] > box.upper[i])
        throw ConfigError("config: key '" + scope + ".lower' exceeds '.upper'");
    return box;
  }
  throw ConfigError("config: key '" + scope + ".kind' must be 'fixed' or 'uniform_box'");
}

inline json initial_to_json(const InitialStateDistribution& init) {
  if (const auto* fp = std::get_if<FixedPoint>(&init))
    return json{{"kind", "fixed"}, {"point", fp->point}};
  const auto& box = std::get<UniformBox>(init);
  return json{{"kind", "uniform_box"}, {"lower", box.lower}, {"upper", box.upper}};
}

inline EnvSpec parse_env(const json& j) {
  require_object(j, "env");
  const std::string kind = get_string(j, "env", "kind");
  if (kind == "mountain_car") {
    check_keys(j, "env",
               {"kind", "max_steps", "initial", "position_min", "position_max", "velocity_min",
                "velocity_max", "goal_position", "action_cost"});
    MountainCar env;
    env.position_min = get_double_or(j, "env", "position_min", env.position_min);
    env.position_max = get_double_or(j, "env", "position_max", env.position_max);
    env.velocity_min = get_double_or(j, "env", "velocity_min", env.velocity_min);
    env.velocity_max = get_double_or(j, "env", "velocity_max", env.velocity_max);
    env.goal_position = get_double_or(j, "env", "goal_position", env.goal_position);
    env.action_cost = get_double_or(j, "env", "action_cost", env.action_cost);
    env.step_cap = get_uint_or(j, "env", "max_steps", env.step_cap);
    if (j.contains("initial")) env.initial = parse_initial(j.at("initial"), "env.initial");
    if (initial_dim(env.initial) != 2)
      throw ConfigError("config: key 'env.initial' must be two-dimensional");
    return env;
  }
  if (kind == "double_well") {
    check_keys(j, "env", {"kind", "max_steps", "initial", "d", "alphas", "sigma", "dt",
                          "target_level"});
    DoubleWell env;
    env.dim = get_uint_or(j, "env", "d", 2);
    if (j.contains("alphas")) {
      env.alphas = get_double_array(j, "env", "alphas");
    } else {
      env.alphas.assign(env.dim, 1.0);
    }
    env.sigma = get_double_or(j, "env", "sigma", env.sigma);
    env.dt = get_double_or(j, "env", "dt", env.dt);
    env.target_level = get_double_or(j, "env", "target_level", env.target_level);
    env.step_cap = get_uint_or(j, "env", "max_steps", env.step_cap);
    env.initial = j.contains("initial") ? parse_initial(j.at("initial"), "env.initial")
                                        : InitialStateDistribution{FixedPoint{Vec(env.dim, -1.0)}};
    env.validate();
    return env;
  }
  throw ConfigError("config: key 'env.kind' must be 'mountain_car' or 'double_well'");
}

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "trajectory_pg") return EstimatorKind::trajectory_pg;
  if (s == "state_space_pg") return EstimatorKind::state_space_pg;
  if (s == "state_space_pg_biased") return EstimatorKind::state_space_pg_biased;
  if (s == "trajectory_dpg") return EstimatorKind::trajectory_dpg;
  if (s == "state_space_dpg") return EstimatorKind::state_space_dpg;
  if (s == "state_space_dpg_biased") return EstimatorKind::state_space_dpg_biased;
  throw ConfigError("config: key 'estimator.kind' has unknown value '" + s + "'");
}

inline const char* estimator_kind_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::trajectory_pg: return "trajectory_pg";
    case EstimatorKind::state_space_pg: return "state_space_pg";
    case EstimatorKind::state_space_pg_biased: return "state_space_pg_biased";
    case EstimatorKind::trajectory_dpg: return "trajectory_dpg";
    case EstimatorKind::state_space_dpg: return "state_space_dpg";
    case EstimatorKind::state_space_dpg_biased: return "state_space_dpg_biased";
  }
  return "";
}

}  // namespace detail

struct ParsedConfig {
  ExperimentConfig config;
  nlohmann::json resolved;  // config with every default filled in
};

inline ParsedConfig parse_config(const nlohmann::json& doc) {
  using detail::json;
  detail::require_object(doc, "(top level)");
  detail::check_keys(doc, "", {"env", "policy", "estimator", "train", "output"});

  ExperimentConfig cfg;

  const json& env = detail::require_key(doc, "", "env");
  cfg.env = detail::parse_env(env);

  const json& policy = detail::require_key(doc, "", "policy");
  detail::require_object(policy, "policy");
  detail::check_keys(policy, "policy", {"kind", "layers"});
  const std::string policy_kind = detail::get_string(policy, "policy", "kind");
  if (policy_kind == "gaussian") {
    cfg.policy_kind = PolicyKind::gaussian;
  } else if (policy_kind == "deterministic") {
    cfg.policy_kind = PolicyKind::deterministic;
  } else {
    throw ConfigError("config: key 'policy.kind' must be 'gaussian' or 'deterministic'");
  }
  cfg.layers = detail::get_uint_array(policy, "policy", "layers");

  const json& estimator = detail::require_key(doc, "", "estimator");
  detail::require_object(estimator, "estimator");
  detail::check_keys(estimator, "estimator", {"kind", "variant", "baseline", "m_fraction"});
  cfg.estimator = detail::parse_estimator_kind(detail::get_string(estimator, "estimator", "kind"));

  const bool det = estimator_is_deterministic(cfg.estimator);
  std::string variant = det ? "reward_to_go_next" : "reward_to_go";
  if (estimator.contains("variant")) variant = detail::get_string(estimator, "estimator", "variant");
  if (variant == "full_return") {
    cfg.pg_variant = PgVariant::full_return;
    cfg.dpg_variant = DpgVariant::full_return;
  } else if (variant == "reward_to_go" && !det) {
    cfg.pg_variant = PgVariant::reward_to_go;
  } else if (variant == "reward_to_go_next" && det) {
    cfg.dpg_variant = DpgVariant::reward_to_go_next;
  } else {
    throw ConfigError("config: key 'estimator.variant' has value '" + variant +
                      "' which does not apply to estimator.kind");
  }

  std::string baseline = "none";
  if (estimator.contains("baseline"))
    baseline = detail::get_string(estimator, "estimator", "baseline");
  if (baseline == "none") {
    cfg.baseline = Baseline::Kind::none;
  } else if (baseline == "batch_mean_return") {
    cfg.baseline = Baseline::Kind::batch_mean_return;
  } else {
    throw ConfigError("config: key 'estimator.baseline' must be 'none' or 'batch_mean_return'");
  }
  cfg.m_fraction = detail::get_double_or(estimator, "estimator", "m_fraction", 1.0);

  const json& train = detail::require_key(doc, "", "train");
  detail::require_object(train, "train");
  detail::check_keys(train, "train",
                     {"k", "iterations", "lr", "seed", "workers", "checkpoint_every",
                      "record_wall_time"});
  cfg.trajectories_per_iter = detail::get_uint(train, "train", "k");
  cfg.iterations = detail::get_uint(train, "train", "iterations");
  cfg.learning_rate = detail::get_double(train, "train", "lr");
  cfg.seed = detail::get_uint(train, "train", "seed");
  cfg.workers = detail::get_uint_or(train, "train", "workers", 1);
  cfg.checkpoint_every = detail::get_uint_or(train, "train", "checkpoint_every", 500);
  cfg.record_wall_time = detail::get_bool_or(train, "train", "record_wall_time", false);

  const json& output = detail::require_key(doc, "", "output");
  detail::require_object(output, "output");
  detail::check_keys(output, "output", {"dir", "checkpoint_format", "occupancy"});
  cfg.output_dir = detail::get_string(output, "output", "dir");
  const std::string fmt =
      output.contains("checkpoint_format")
          ? detail::get_string(output, "output", "checkpoint_format")
          : "json";
  if (fmt == "json") {
    cfg.checkpoint_format = CheckpointFormat::json;
  } else if (fmt == "binary") {
    cfg.checkpoint_format = CheckpointFormat::binary;
  } else {
    throw ConfigError("config: key 'output.checkpoint_format' must be 'json' or 'binary'");
  }
  if (output.contains("occupancy")) {
    const json& occ = output.at("occupancy");
    detail::require_object(occ, "output.occupancy");
    detail::check_keys(occ, "output.occupancy", {"coords", "bins", "range", "rollouts"});
    OccupancyExport oe;
    const auto coords = detail::get_uint_array(occ, "output.occupancy", "coords");
    const auto bins = detail::get_uint_array(occ, "output.occupancy", "bins");
    const auto range = detail::get_double_array(occ, "output.occupancy", "range");
    if (coords.size() != 2) throw ConfigError("config: key 'output.occupancy.coords' needs 2 entries");
    if (bins.size() != 2) throw ConfigError("config: key 'output.occupancy.bins' needs 2 entries");
    if (range.size() != 4)
      throw ConfigError("config: key 'output.occupancy.range' needs [lo0, hi0, lo1, hi1]");
    oe.coords = {coords[0], coords[1]};
    oe.grid = GridSpec{range[0], range[1], range[2], range[3], bins[0], bins[1]};
    oe.rollouts = detail::get_uint_or(occ, "output.occupancy", "rollouts", 100);
    cfg.occupancy = oe;
  }

  cfg.validate();

  // resolved document: every default made explicit
  json resolved;
  resolved["env"] = env;
  if (std::holds_alternative<DoubleWell>(cfg.env)) {
    const auto& dw = std::get<DoubleWell>(cfg.env);
    resolved["env"] = json{{"kind", "double_well"},
                           {"d", dw.dim},
                           {"alphas", dw.alphas},
                           {"sigma", dw.sigma},
                           {"dt", dw.dt},
                           {"target_level", dw.target_level},
                           {"max_steps", dw.step_cap},
                           {"initial", detail::initial_to_json(dw.initial)}};
  } else {
    const auto& mc = std::get<MountainCar>(cfg.env);
    resolved["env"] = json{{"kind", "mountain_car"},
                           {"position_min", mc.position_min},
                           {"position_max", mc.position_max},
                           {"velocity_min", mc.velocity_min},
                           {"velocity_max", mc.velocity_max},
                           {"goal_position", mc.goal_position},
                           {"action_cost", mc.action_cost},
                           {"max_steps", mc.step_cap},
                           {"initial", detail::initial_to_json(mc.initial)}};
  }
  resolved["policy"] = json{{"kind", policy_kind}, {"layers", cfg.layers}};
  resolved["estimator"] = json{{"kind", detail::estimator_kind_name(cfg.estimator)},
                               {"variant", det ? (cfg.dpg_variant == DpgVariant::full_return
                                                      ? "full_return"
                                                      : "reward_to_go_next")
                                               : (cfg.pg_variant == PgVariant::full_return
                                                      ? "full_return"
                                                      : "reward_to_go")},
                               {"baseline", baseline},
                               {"m_fraction", cfg.m_fraction}};
  resolved["train"] = json{{"k", cfg.trajectories_per_iter},
                           {"iterations", cfg.iterations},
                           {"lr", cfg.learning_rate},
                           {"seed", cfg.seed},
                           {"workers", cfg.workers},
                           {"checkpoint_every", cfg.checkpoint_every},
                           {"record_wall_time", cfg.record_wall_time}};
  resolved["output"] = json{{"dir", cfg.output_dir},
                            {"checkpoint_format",
                             cfg.checkpoint_format == CheckpointFormat::json ? "json" : "binary"}};
  if (cfg.occupancy) {
    resolved["output"]["occupancy"] =
        json{{"coords", {cfg.occupancy->coords.first, cfg.occupancy->coords.second}},
             {"bins", {cfg.occupancy->grid.n0, cfg.occupancy->grid.n1}},
             {"range", {cfg.occupancy->grid.lo0, cfg.occupancy->grid.hi0, cfg.occupancy->grid.lo1,
                        cfg.occupancy->grid.hi1}},
             {"rollouts", cfg.occupancy->rollouts}};
  }
  return {std::move(cfg), std::move(resolved)};
}

inline ParsedConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  // a manifest wraps the config it was produced from
  if (doc.is_object() && doc.contains("rtrl_version") && doc.contains("config"))
    return parse_config(doc.at("config"));
  return parse_config(doc);
}

inline ParsedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

inline nlohmann::json make_manifest(const nlohmann::json& resolved) {
  return nlohmann::json{{"rtrl_version", kVersion}, {"config", resolved}};
}

}  // namespace rtrl
