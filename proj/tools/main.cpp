#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "hwsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "hwsim: simulation and verification of ergodic scheduling control for "
      "multiclass multi-pool Markovian networks in the Halfin-Whitt regime"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string chosen;
  for (const char* name : hwsim::cli::kSubcommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "experiment config file")
        ->required();
    sub->add_option("--set", overrides,
                    "override a config entry, e.g. --set run.horizon=500")
        ->take_all();
    sub->callback([&chosen, name]() { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return hwsim::cli::run(chosen, config_path, overrides, std::cout, std::cerr);
}
