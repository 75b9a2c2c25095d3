#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtrl/config.hpp"
#include "rtrl/io.hpp"
#include "rtrl/svg.hpp"
#include "rtrl/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_lr_list(const std::string& text) {
  std::vector<double> lrs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0)) throw std::invalid_argument(item);
      lrs.push_back(v);
    } catch (const std::exception&) {
      throw rtrl::ConfigError("sweep: bad learning rate '" + item + "'");
    }
  }
  if (lrs.empty()) throw rtrl::ConfigError("sweep: empty learning-rate list");
  return lrs;
}

int cmd_train(const std::string& config_path) {
  rtrl::ParsedConfig pc = rtrl::load_config_file(config_path);
  const fs::path dir = rtrl::resolve_output_dir(pc.config.output_dir);
  try {
    const rtrl::RunMetrics metrics = rtrl::run_training_to_dir(pc, dir);
    const auto& last = metrics.rows.back();
    std::cout << "trained " << metrics.rows.size() << " iterations -> " << dir.string() << "\n"
              << "final mean return " << rtrl::format_double(last.mean_return)
              << ", mean hitting time " << rtrl::format_double(last.mean_hitting_time) << "\n";
    return 0;
  } catch (const rtrl::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << " (partial metrics flushed to "
              << (dir / "metrics.csv").string() << ")\n";
    return 1;
  }
}

int cmd_sweep(const std::string& config_path, const std::string& lrs_text, std::size_t repeats) {
  const std::vector<double> lrs = parse_lr_list(lrs_text);
  rtrl::ParsedConfig pc = rtrl::load_config_file(config_path);
  const fs::path dir = rtrl::resolve_output_dir(pc.config.output_dir);
  const std::size_t failures = rtrl::run_sweep_to_dir(pc, lrs, repeats, dir);
  std::cout << "sweep finished: " << lrs.size() * repeats - failures << "/" << lrs.size() * repeats
            << " runs ok -> " << (dir / "summary.csv").string() << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_verify() {
  const auto results = rtrl::verify::run_all_checks();
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "all checks passed\n" : "some checks FAILED\n");
  return all_pass ? 0 : 1;
}

int cmd_plot(const std::string& input, const std::string& kind, const std::string& out_path) {
  std::ifstream in(input);
  if (!in) {
    std::cerr << "plot: cannot open '" << input << "'\n";
    return 1;
  }
  std::string svg;
  if (kind == "occupancy") {
    svg = rtrl::render_occupancy_heatmap(rtrl::read_occupancy_csv(in));
  } else {
    const auto rows = rtrl::read_metrics_csv(in);
    svg = rtrl::render_metrics_plot(
        rows, kind == "return" ? rtrl::PlotKind::negative_return : rtrl::PlotKind::effective_lr);
  }
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "plot: cannot write '" << out_path << "'\n";
    return 1;
  }
  out << svg;
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy gradients with random time horizons"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "run one training experiment from a config file");
  train_cmd->add_option("--config", train_config, "config or manifest JSON")->required();

  std::string sweep_config, sweep_lrs;
  std::size_t sweep_repeats = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "learning-rate sweep with per-cell run directories");
  sweep_cmd->add_option("--config", sweep_config, "config or manifest JSON")->required();
  sweep_cmd->add_option("--lrs", sweep_lrs, "comma-separated learning rates")->required();
  sweep_cmd->add_option("--repeats", sweep_repeats, "independent repeats per learning rate");

  auto* verify_cmd =
      app.add_subcommand("verify", "run the numerical certification battery and report margins");

  std::string plot_input, plot_kind, plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "render a metrics or occupancy CSV as SVG");
  plot_cmd->add_option("--input", plot_input, "input CSV")->required();
  plot_cmd->add_option("--kind", plot_kind, "return | effective_lr | occupancy")
      ->required()
      ->check(CLI::IsMember({"return", "effective_lr", "occupancy"}));
  plot_cmd->add_option("--out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_config);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, sweep_lrs, sweep_repeats);
    if (verify_cmd->parsed()) return cmd_verify();
    if (plot_cmd->parsed()) return cmd_plot(plot_input, plot_kind, plot_out);
  } catch (const rtrl::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
