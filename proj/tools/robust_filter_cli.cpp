#include <iostream>
#include <utility>

#include <CLI11.hpp>

#include "robust_filter/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace robust_filter::cli;

  CLI::App app{"Robust ε-insensitive state estimation: simulate, filter, smooth, compare"};
  app.require_subcommand(1, 1);

  Invocation inv;
  std::uint64_t seed = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "generate measurements.csv and truth.csv"},
      {"filter", "run a recursive filter over a measurement file"},
      {"smooth", "solve the full-horizon batch problem (small N)"},
      {"compare", "Monte-Carlo RMSE comparison of several filters"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config, "JSON run configuration")->required();
    sub->add_option("--out", inv.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override simulation.seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  inv.command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed") > 0) inv.seed = seed;
  try {
    inv.batch_cap = batch_cap_from_env();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return execute(inv);
}
