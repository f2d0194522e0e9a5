#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "meanflow/commands.hpp"
#include "meanflow/config.hpp"

namespace {

std::vector<double> parse_rho_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    const std::string item = csv.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') {
      throw meanflow::ConfigError("--rho entry '" + item + "' is not a number");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient flow and Newton solver for the mean field equation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string rho_csv;

  CLI::App* run = app.add_subcommand("run", "integrate the volume-form flow");
  run->add_option("--config", config_path, "experiment config file")->required();

  CLI::App* stationary =
      app.add_subcommand("stationary", "solve the stationary equation directly");
  stationary->add_option("--config", config_path, "experiment config file")
      ->required();

  CLI::App* verify =
      app.add_subcommand("verify", "check the discrete operators and the flow");
  verify->add_option("--config", config_path, "experiment config file")
      ->required();

  CLI::App* sweep =
      app.add_subcommand("sweep", "run the flow once per listed rho");
  sweep->add_option("--config", config_path, "experiment config file")
      ->required();
  sweep->add_option("--rho", rho_csv, "comma-separated rho values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const meanflow::ExperimentConfig cfg = meanflow::parse_config(config_path);
    if (run->parsed()) return meanflow::cmd_run(cfg);
    if (stationary->parsed()) return meanflow::cmd_stationary(cfg);
    if (verify->parsed()) return meanflow::cmd_verify(cfg);
    return meanflow::cmd_sweep(cfg, parse_rho_list(rho_csv));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
