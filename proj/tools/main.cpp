#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace bridgeforge::cli;

  CLI::App app{"Learn and sample conditioned diffusion bridges"};
  app.set_version_flag("--version", std::string("bridgeforge ") + BRIDGEFORGE_VERSION);
  app.require_subcommand(1);

  CommandOptions options;
  std::string config;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"train", "Train a score network on adjoint paths"},
      {"sample", "Sample bridges with a trained checkpoint"},
      {"evaluate", "Score error and endpoint statistics for a checkpoint"},
      {"adjoint-check", "Check weighted adjoint expectations against closed forms"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    if (std::string(name) != "adjoint-check") sub->add_option("--checkpoint", checkpoint, "Checkpoint path");
    sub->add_option("--out", out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Seed (overrides the config seed)");
    sub->add_option("--workers", options.workers, "Worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigError;
  }

  const auto* sub = app.get_subcommands().front();
  options.config = config;
  if (const auto* opt = sub->get_option_no_throw("--checkpoint"); opt != nullptr && opt->count() > 0) {
    options.checkpoint = checkpoint;
  }
  if (sub->count("--out") > 0) options.out = out;
  if (sub->count("--seed") > 0) options.seed = seed;
  for (int i = 0; i < argc; ++i) options.command_line += (i ? " " : "") + std::string(argv[i]);
  return run_command(sub->get_name(), options, std::cout, std::cerr);
}
