#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rtrl/checkpoint.hpp"
#include "rtrl/config.hpp"
#include "rtrl/csv.hpp"

namespace rtrl {

// RTRL_OUTPUT_ROOT re-roots relative output directories; absolute paths are
// taken as-is.
inline std::filesystem::path resolve_output_dir(const std::string& configured) {
  const char* root = std::getenv("RTRL_OUTPUT_ROOT");
  if (root != nullptr && *root != '\0') return std::filesystem::path(root) / configured;
  return configured;
}

namespace detail {

inline std::string checkpoint_name(std::size_t iter, bool final, CheckpointFormat fmt) {
  const char* ext = fmt == CheckpointFormat::json ? ".json" : ".bin";
  if (final) return std::string("checkpoint_final") + ext;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06zu%s", iter, ext);
  return buf;
}

}  // namespace detail

// Writes a complete run directory: manifest.json (resolved config + version),
// metrics.csv streamed row by row (partial results survive a divergence
// abort), scheduled checkpoints, and the optional occupancy export.
inline RunMetrics run_training_to_dir(const ParsedConfig& pc, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream manifest(dir / "manifest.json");
    if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    manifest << make_manifest(pc.resolved).dump(2) << '\n';
  }

  std::ofstream metrics_out(dir / "metrics.csv");
  if (!metrics_out) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  write_metrics_header(metrics_out);

  const ExperimentConfig& cfg = pc.config;
  TrainHooks hooks;
  hooks.on_row = [&](const MetricsRow& row) {
    write_metrics_row(metrics_out, row);
    metrics_out.flush();
  };
  hooks.on_checkpoint = [&](std::size_t iter, const PolicyVariant& policy) {
    const bool final = iter == cfg.iterations;
    save_checkpoint(policy, (dir / detail::checkpoint_name(iter, final, cfg.checkpoint_format)).string(),
                    cfg.checkpoint_format);
  };

  PolicyVariant final_policy;
  const RunMetrics metrics = train(cfg, hooks, &final_policy);

  if (cfg.occupancy) {
    const auto& oe = *cfg.occupancy;
    std::vector<Trajectory> batch(oe.rollouts);
    std::visit(
        [&](const auto& env) {
          std::visit(
              [&](const auto& policy) {
                for (std::size_t k = 0; k < batch.size(); ++k) {
                  Rng rng = derive_stream(cfg.seed, seed_tag::eval, k);
                  batch[k] = sample_trajectory(env, policy, rng);
                }
              },
              final_policy);
        },
        cfg.env);
    const auto hist = occupancy_histogram(batch, oe.coords, oe.grid);
    std::ofstream occ_out(dir / "occupancy.csv");
    if (!occ_out) throw std::runtime_error("cannot write " + (dir / "occupancy.csv").string());
    hist.write_csv(occ_out);
  }
  return metrics;
}

// One subdirectory per (learning rate, repeat) plus a summary table with one
// row per cell. Diverged cells are recorded and do not stop the sweep.
// Returns the number of failed cells.
inline std::size_t run_sweep_to_dir(const ParsedConfig& base, const std::vector<double>& lrs,
                                    std::size_t repeats, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (lrs.empty()) throw ConfigError("sweep: need at least one learning rate");
  if (repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  fs::create_directories(dir);

  std::ofstream summary(dir / "summary.csv");
  if (!summary) throw std::runtime_error("cannot write " + (dir / "summary.csv").string());
  summary << "lr,repeat,seed,status,final_smoothed_neg_return\n";

  std::size_t failures = 0;
  for (std::size_t li = 0; li < lrs.size(); ++li) {
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      ParsedConfig cell = base;
      cell.config.learning_rate = lrs[li];
      cell.config.seed = derive_seed(base.config.seed, seed_tag::sweep, li, rep);
      cell.resolved["train"]["lr"] = cell.config.learning_rate;
      cell.resolved["train"]["seed"] = cell.config.seed;

      const std::string cell_name = "lr_" + format_double(lrs[li]) + "_rep_" + std::to_string(rep);
      cell.resolved["output"]["dir"] =
          (fs::path(base.config.output_dir) / cell_name).generic_string();

      summary << format_double(lrs[li]) << ',' << rep << ',' << cell.config.seed << ',';
      try {
        const RunMetrics metrics = run_training_to_dir(cell, dir / cell_name);
        summary << "ok," << format_double(final_smoothed_negative_return(metrics)) << '\n';
      } catch (const DivergenceError&) {
        ++failures;
        summary << "diverged,nan\n";
      }
      summary.flush();
    }
  }
  return failures;
}

}  // namespace rtrl
