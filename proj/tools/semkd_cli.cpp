// semkd: run, ablate and summarise semantic-distillation FSCIL experiments.
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semkd/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"semkd - few-shot class-incremental learning with semantic distillation"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "train and evaluate one configuration");
  run->add_option("--config", config, "TOML experiment file")->required()->check(CLI::ExistingFile);
  run->add_option("--overrides", overrides, "dotted.key=value pairs applied after the file");

  std::vector<std::string> switches;
  auto* ablate = app.add_subcommand("ablate", "run every combination of the given switches");
  ablate->add_option("--config", config, "TOML experiment file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--switches", switches, "no-distill, no-attn-loss, single-embedding")->required();
  ablate->add_option("--overrides", overrides, "dotted.key=value pairs applied after the file");

  std::string results;
  auto* report = app.add_subcommand("report", "aggregate reports.json files below a directory");
  report->add_option("results_dir", results, "directory holding runs")->required();

  std::uint64_t seed = 0;
  std::size_t trials = 1;
  auto* grads = app.add_subcommand("check-grads", "finite-difference check of the head gradients");
  grads->add_option("--seed", seed, "instance seed");
  grads->add_option("--trials", trials, "number of random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) return semkd::cli_run(config, overrides, std::cout, std::cerr);
  if (*ablate) return semkd::cli_ablate(config, switches, overrides, std::cout, std::cerr);
  if (*report) return semkd::cli_report(results, std::cout, std::cerr);
  return semkd::cli_check_grads(seed, trials, std::cout, std::cerr);
}
