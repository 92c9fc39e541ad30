#include "lie_svi/experiment.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Lie group spectral variational integrator experiments"};
  app.require_subcommand(1);
  std::string config;
  std::string out = ".";
  for (const char* name : {"simulate", "reference", "converge-n", "converge-h", "invariants"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON experiment config")->required();
    sub->add_option("--out", out, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lie_svi::exit_config;
  }
  try {
    return lie_svi::run_command(app.get_subcommands().front()->get_name(), config, out, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lie_svi::exit_config;
  }
}
