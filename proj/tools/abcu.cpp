#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "abcu/cli.hpp"

namespace {

void apply_overrides(abcu::cli::ExperimentConfig& config,
                     const std::optional<std::string>& out,
                     const std::optional<std::int64_t>& seed,
                     const std::optional<int>& threads,
                     const std::optional<std::int64_t>& epochs) {
  if (out) config.out_dir = *out;
  if (seed) config.run.seed = static_cast<std::uint64_t>(*seed);
  if (threads) config.run.threads = *threads;
  if (epochs) config.run.epochs = *epochs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous block-coordinate update experiments"};
  app.require_subcommand(1);

  std::vector<std::string> config_paths;
  std::optional<std::string> out_dir;
  std::optional<std::int64_t> seed;
  std::optional<int> threads;
  std::optional<std::int64_t> epochs;
  bool json_output = false;

  auto* run_cmd = app.add_subcommand("run", "execute one configured run");
  run_cmd->add_option("--config", config_paths, "config file")->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed", seed, "run seed override");
  run_cmd->add_option("--threads", threads, "thread count override");
  run_cmd->add_option("--epochs", epochs, "epoch count override");

  auto* step_cmd =
      app.add_subcommand("stepsize", "print stepsizes for every regime");
  step_cmd->add_option("--config", config_paths, "config file")->required();
  step_cmd->add_flag("--json", json_output, "machine readable output");
  step_cmd->add_option("--threads", threads, "thread count override");

  auto* compare_cmd = app.add_subcommand(
      "compare", "run several configs over one instance and merge the traces");
  compare_cmd->add_option("--config", config_paths, "config files (two or more)")
      ->required();
  compare_cmd->add_option("--out", out_dir, "output directory");
  compare_cmd->add_option("--seed", seed, "base seed override");
  compare_cmd->add_option("--epochs", epochs, "epoch count override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      if (config_paths.size() != 1) {
        std::cerr << "run takes exactly one --config\n";
        return 1;
      }
      auto config = abcu::cli::ExperimentConfig::parse_file(config_paths[0]);
      apply_overrides(config, out_dir, seed, threads, epochs);
      return abcu::cli::cmd_run(config);
    }
    if (step_cmd->parsed()) {
      if (config_paths.size() != 1) {
        std::cerr << "stepsize takes exactly one --config\n";
        return 1;
      }
      auto config = abcu::cli::ExperimentConfig::parse_file(config_paths[0]);
      apply_overrides(config, std::nullopt, std::nullopt, threads,
                      std::nullopt);
      return abcu::cli::cmd_stepsize(config, json_output);
    }
    if (compare_cmd->parsed()) {
      std::vector<abcu::cli::ExperimentConfig> configs;
      for (const auto& path : config_paths) {
        auto config = abcu::cli::ExperimentConfig::parse_file(path);
        apply_overrides(config, std::nullopt, seed, std::nullopt, epochs);
        configs.push_back(std::move(config));
      }
      std::string merged_out = out_dir.value_or(configs.front().out_dir);
      return abcu::cli::cmd_compare(configs, merged_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
