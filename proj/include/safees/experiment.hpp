#pragma once

// Experiment configs, batch runs and the command implementations behind the
// `safees` CLI. Output formats:
//   CSV  comma separated, header row, LF endings, %.17g floats
//   JSON summary/report documents, key order fixed

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safees/diagnostics.hpp"
#include "safees/dynamics.hpp"
#include "safees/expr.hpp"
#include "safees/integrator.hpp"

namespace safees {

/// Quadratic objective with its unconstrained minimum at (-3, 0).
inline constexpr std::string_view kTwoLobeObjective = "(x1 + 3)^2 + x2^2";
/// Two Gaussian bumps at (+-1, 0) shifted down by 0.5; the safe set is a non-convex peanut.
inline constexpr std::string_view kTwoLobeBarrier = "exp(-(x1 - 1)^2 - x2^2) + exp(-(x1 + 1)^2 - x2^2) - 0.5";

struct DiagnosticsConfig {
  bool gradients = true;
  std::size_t gradient_points = 100;
  Box gradient_box;           // defaults to search_box
  Box search_box;             // minimizer / alpha / angle sampling region
  std::size_t minimizer_coarse = 400;
  std::size_t refine_iters = 6;
  double rho = -0.25;
  std::vector<std::size_t> alpha_counts;  // defaults to minimizer_coarse per axis
  std::optional<double> alpha;            // overrides select_alpha
  bool angle = true;
  double r_star = 0.5;
  double invariance_tol = 1e-3;
  double lyapunov_tol = 1e-6;
  double exclusion_radius = 0.05;
  std::optional<double> delta;      // default a * max |grad h| along the run
  std::optional<double> transient;  // default 5 / omega_f
  double convergence_radius = 0.3;
  bool estimator = true;
  double estimator_floor = 0.5;
  double estimator_gain = 5.0;
};

struct ExperimentConfig {
  std::size_t dim = 0;
  std::string j_expr;
  std::string h_expr;
  EsConfig es;
  std::vector<Rational> omegas_exact;
  SimSpec sim;  // dt <= 0 selects the default for the system
  std::vector<std::vector<double>> initial_conditions;
  std::vector<double> estimator_init;  // length 2n+2: G_J, eta_J, G_h, eta_h
  DiagnosticsConfig diagnostics;
  std::string output = "out";
  std::size_t csv_stride = 1;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  /// Parses a JSON document. Each override is "dotted.path=value" where value
  /// is JSON (a bare word is taken as a string). Throws ConfigError.
  static ExperimentConfig from_json_text(std::string_view text, std::span<const std::string> overrides = {});
  static ExperimentConfig from_file(const std::string& path, std::span<const std::string> overrides = {});
  /// The built-in two-lobe problem with a = 0.1, omega_f = 10, M+ = 1e4,
  /// omegas = (10, 13) and a 7x5 IC grid over [-3.5, 3.5] x [-2, 2].
  static ExperimentConfig two_lobe_example(double c, double k);

  MapPair maps() const;
  EsState initial_state(std::span<const double> theta0) const;
  /// sim with dt resolved and the system overridden.
  SimSpec resolved_sim(SystemKind system) const;
};

struct RunRecord {
  std::vector<double> initial;
  std::vector<double> final_theta;
  double final_distance = 0.0;
  double min_h = 0.0;
  double safety_margin = 0.0;
  bool converged = false;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  bool aborted = false;
  double abort_time = 0.0;
  std::string error;
};

struct RunResult {
  RunRecord record;
  std::optional<Trajectory> trajectory;
};

/// Runs every initial condition, up to `workers` at a time. Results are in IC order.
std::vector<RunResult> run_batch(const ExperimentConfig& cfg, SystemKind system, const MapPair& maps,
                                 const MinimizerEstimate& minimizer, const std::optional<LyapunovRef>& lyap,
                                 bool keep_trajectories);

MinimizerEstimate minimizer_for(const ExperimentConfig& cfg, const MapPair& maps);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::vector<std::string> csv_header(const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj, const EsConfig* cfg,
                          std::size_t stride = 1);
CsvTable read_csv(const std::string& path);

std::string summary_json(const std::string& command, SystemKind system, const MinimizerEstimate& minimizer,
                         const std::vector<RunResult>& runs);

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitNumerical = 3 };

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);
int cmd_exact(const ExperimentConfig& cfg, std::ostream& log);
int cmd_check(const ExperimentConfig& cfg, std::ostream& log);
int cmd_paper_example(const std::string& out_dir, std::size_t workers, std::ostream& log);

/// Builds the diagnostics report that cmd_check writes.
DiagnosticsReport run_checks(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace safees
