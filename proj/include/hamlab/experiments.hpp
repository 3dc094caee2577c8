#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hamlab/refinement.hpp"
#include "hamlab/solvers.hpp"

namespace hamlab {

// How the initial control vector is built for a grid of N intervals.
struct ControlsSpec {
  std::string kind;               // constant | values | ramp | random; empty = experiment default
  double value = 0.0;             // constant
  std::vector<double> values;     // values (length must equal N)
  double start = -1.0;            // ramp, linear in k from start to end
  double end = -0.5;
  double low = -1.0;              // random, uniform on [low, high] from the run seed
  double high = 1.0;
};

struct BasisSpec {
  // constant | monomial | indicator | alternating | duplicated_constant | duplicated_alternating
  std::string kind = "constant";
  std::size_t size = 1;           // monomial count; ignored by the fixed-size kinds
  std::vector<double> initial_coeffs;  // zeros when empty
};

struct VerifySpec {
  long corrupt_index = -1;  // costate index to perturb, negative for none
  double corrupt_delta = 0.0;
};

struct GradcheckSpec {
  std::vector<std::size_t> n_values{2, 8, 32};
  std::size_t trials = 10;
  std::size_t derivative_probes = 100;
};

struct SweepSpec {
  std::vector<double> h_values{0.1, 0.01, 0.001};
  double eps = 1e-6;                // fixed tolerance of the accuracy sweep
  double coordinated_ratio = 1e-4;  // eps_i = ratio * h_i
  double alpha = 1.0;               // fixed step of the rate sweep
  double x_tolerance = 1e-8;        // rate sweep stops on ||g||_inf <= h * x_tolerance
  std::size_t max_iterations = 200000;
};

struct BasinSpec {
  double offset_min = -10.0;
  double offset_max = 10.0;
  std::size_t points = 41;
  double alpha = 1.0;
  double h = 0.05;
  double tolerance = 1e-6;  // on ||dH/du||_inf
  std::size_t max_iterations = 20000;
};

struct AdaptiveSpec {
  std::string rule = "arclength";
};

struct OdeSpec {
  std::string name = "scalar_decay";
  std::vector<double> x0{1.0};
  std::vector<double> psi0{1.0};
  double t_end = 1.0;
  double step = 1e-3;
  double drift_tolerance = 1e-9;
  double order_step = 0.1;  // step-halving study starts here
  double euler_step = 1e-2;
};

struct ScheduleSpec {
  std::vector<RefinementLevel> levels;  // explicit levels; doubling schedule when empty
  std::size_t n0 = 8;
  std::size_t level_count = 3;
  double ratio = 1e-4;
  std::size_t max_iterations = 100000;
  std::optional<double> target_ratio;  // defaults to `ratio`
};

/// Everything a run needs. Every field has a default; unknown keys in a
/// configuration file are rejected. Empty problem / zero n_intervals / empty
/// controls kind are filled in per experiment by resolve_defaults.
struct ExperimentConfig {
  std::string problem;
  std::size_t n_intervals = 0;
  ControlsSpec controls;
  SolverConfig solver;
  std::optional<BasisSpec> basis;
  double fd_step = 1e-6;
  double fd_tolerance = 1e-5;
  VerifySpec verify;
  GradcheckSpec gradcheck;
  SweepSpec sweep;
  BasinSpec basin;
  AdaptiveSpec adaptive;
  OdeSpec ode;
  ScheduleSpec schedule;
  std::uint64_t seed = 0;
  std::string output_format = "json";
  std::string output_path;
};

// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Experiment-specific defaults: basin runs cubic_drag, adaptive-noise runs
// damped_linear with N = 16 and ramp controls, refine runs damped_linear;
// everything else linear_integrator, N = 10, zero controls.
ExperimentConfig resolve_defaults(std::string_view experiment, ExperimentConfig config);

// Builds the initial controls for N intervals; throws ConfigError on mismatch.
std::vector<double> make_controls(const ControlsSpec& spec, std::size_t n, std::uint64_t seed);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::json config;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<Table> tables;
  std::map<std::string, bool> verdicts;
  int exit_code = 0;  // 0 ok, 2 numerical divergence
  std::string message;
  double wall_clock_seconds = 0.0;

  bool all_passed() const;
};

inline constexpr std::string_view kExperimentNames[] = {
    "solve", "verify", "gradcheck", "sweep-accuracy", "sweep-rate",
    "basin", "adaptive-noise", "hamiltonianize", "refine"};

ExperimentReport cmd_solve(const ExperimentConfig& config);
ExperimentReport cmd_verify(const ExperimentConfig& config);
ExperimentReport cmd_gradcheck(const ExperimentConfig& config);
ExperimentReport cmd_sweep_accuracy(const ExperimentConfig& config);
ExperimentReport cmd_sweep_rate(const ExperimentConfig& config);
ExperimentReport cmd_basin(const ExperimentConfig& config);
ExperimentReport cmd_adaptive_noise(const ExperimentConfig& config);
ExperimentReport cmd_hamiltonianize(const ExperimentConfig& config);
ExperimentReport cmd_refine(const ExperimentConfig& config);

/// Dispatches by subcommand name and fills in the config echo and the wall
/// clock. Divergence becomes exit_code 2 in the report; configuration
/// problems throw ConfigError.
ExperimentReport run_experiment(std::string_view name, const ExperimentConfig& config);

// JSON document; the wall-clock field is omitted when include_wall_clock is false.
nlohmann::json report_to_json(const ExperimentReport& report, bool include_wall_clock = true);
// Every table as CSV, each preceded by a "# <name>" line; 17 significant digits.
std::string report_to_csv(const ExperimentReport& report);
// Writes `report` in `format` ("json" or "csv") to `path`, or stdout when path is empty.
void write_report(const ExperimentReport& report, const std::string& format,
                  const std::string& path);

}  // namespace hamlab
