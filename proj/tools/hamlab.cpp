// hamlab: batch experiment harness.
//
//   hamlab <experiment> [--config FILE] [--out FILE] [--format json|csv] [--seed N]
//
// Exit codes: 0 success, 2 numerical divergence, 3 configuration error.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hamlab/errors.hpp"
#include "hamlab/experiments.hpp"

namespace {

constexpr int kExitDivergence = 2;
constexpr int kExitConfig = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct-shooting / indirect-method experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::string> format;
  std::optional<std::uint64_t> seed;

  for (auto name : hamlab::kExperimentNames) {
    auto* sub = app.add_subcommand(std::string(name));
    sub->add_option("--config", config_path, "Configuration file (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "Report destination; stdout when omitted");
    sub->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", seed, "Seed for randomized controls");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string experiment = app.get_subcommands().front()->get_name();
  try {
    hamlab::ExperimentConfig config =
        config_path.empty() ? hamlab::ExperimentConfig{} : hamlab::load_config(config_path);
    if (format) config.output_format = *format;
    if (!out_path.empty()) config.output_path = out_path;
    if (seed) config.seed = *seed;

    const auto report = hamlab::run_experiment(experiment, config);
    hamlab::write_report(report, config.output_format, config.output_path);
    if (report.exit_code != 0) {
      std::cerr << "hamlab " << experiment << ": " << report.message << "\n";
      return kExitDivergence;
    }
    return 0;
  } catch (const hamlab::ConfigError& e) {
    std::cerr << "hamlab " << experiment << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const hamlab::DivergenceError& e) {
    std::cerr << "hamlab " << experiment << ": " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "hamlab " << experiment << ": " << e.what() << "\n";
    return kExitConfig;
  }
}
