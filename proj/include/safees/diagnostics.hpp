#pragma once

// Numeric certificates for the safety-filtered flow and the ES loop:
// assumption probes on the maps, a brute-force constrained-minimizer oracle,
// Lyapunov functions and trajectory-level inequality checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safees/dynamics.hpp"
#include "safees/expr.hpp"
#include "safees/integrator.hpp"

namespace safees {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  /// Normalizes sign and common factors. Throws ConfigError on den == 0.
  static Rational make(std::int64_t num, std::int64_t den = 1);
  /// Accepts "13", "7/2" or a finite decimal such as "12.5".
  static Rational parse(const std::string& text);
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct FrequencyViolation {
  enum class Kind { Equal, SumEquals };
  Kind kind;
  std::size_t i, j, k;  // 0-based; k unused for Equal
  std::string describe() const;
};

struct FrequencyVerdict {
  bool ok = true;
  std::vector<FrequencyViolation> violations;
};

/// Pairwise distinctness and w_i + w_j != w_k over distinct indices, in exact arithmetic.
FrequencyVerdict validate_frequencies(std::span<const Rational> omegas);

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Tensor grid with `counts[i]` evenly spaced nodes per axis, endpoints
/// included (a single node sits at the midpoint).
struct GridSpec {
  Box box;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  void validate(std::size_t n) const;
};

std::vector<double> grid_axis(double lower, double upper, std::size_t count);
void for_each_grid_point(const GridSpec& grid, const std::function<void(std::span<const double>)>& fn);

struct MinimizerEstimate {
  std::vector<double> theta_star;
  double j_star = 0.0;
  double h_at_star = 0.0;
  bool on_boundary = false;
  double collinearity_residual = 0.0;
  std::vector<double> round_values;  // incumbent J after the coarse pass and each refinement
};

MinimizerEstimate find_constrained_minimizer(const MapPair& maps, const Box& box, std::size_t coarse,
                                             std::size_t refine_iters);

double lyapunov_v1(std::span<const double> theta, const MapPair& maps, const MinimizerEstimate& m);
double lyapunov_v(std::span<const double> theta, const MapPair& maps, const MinimizerEstimate& m,
                  double alpha);
/// max{-alpha*h, 0} + max{j - j_star, 0}
double lyapunov_v_from_values(double j, double h, double j_star, double alpha) noexcept;

struct AlphaSelection {
  double alpha = 0.0;
  double l_estimate = 0.0;    // min |grad h| on the band rho <= h <= 0
  double sup_grad_j = 0.0;    // max |grad J| on h >= rho
  double rho = 0.0;
  std::size_t sample_count = 0;  // band samples behind l_estimate
};

/// alpha = 1.1 * sup_grad_j / L over grid samples, floored at 1 for constant J.
AlphaSelection select_alpha(const MapPair& maps, double rho, const GridSpec& grid);

/// Alternative rule for unbounded grad J: 1.1 * max{sup_omega/L, c|rho|/(L^2 (1 - f*^2))}.
double alpha_case_b(double sup_grad_j_omega, double l_estimate, double c, double rho, double f_star);

struct AngleConditionResult {
  double f_star_estimate = 0.0;
  bool below_one = false;
  double margin = 0.0;  // 1 - f_star_estimate
  std::vector<double> worst_theta;
  std::size_t sample_count = 0;
};

AngleConditionResult check_angle_condition(const MapPair& maps, double rho, double r_star,
                                           const MinimizerEstimate& minimizer, const GridSpec& grid);

struct CheckResult {
  std::string name;
  bool pass = false;
  double margin = 0.0;  // worst-case slack; negative means violated
  std::optional<double> worst_time;
  std::vector<double> worst_theta;
  std::string detail;
};

struct DiagnosticsReport {
  std::vector<CheckResult> checks;

  /// Replaces an earlier result with the same name.
  void add(CheckResult result);
  const CheckResult* find(const std::string& name) const;
  bool all_pass() const;
  std::string to_json() const;
};

/// Forward-mode versus central differences on seeded uniform samples in `box`.
CheckResult check_gradients(const MapPair& maps, const Box& box, std::size_t count, std::uint64_t seed,
                            double step = 1e-5, double rel_tol = 1e-6);

CheckResult check_frequencies(std::span<const Rational> omegas);

/// Along an EXACT trajectory: dh/dt + c*h >= -tol between samples (difference
/// quotient against the interval mean of h) and h(t) >= h(t0) e^{-c(t-t0)} - tol.
CheckResult check_invariance(const Trajectory& traj, double c, double tol);

/// Per-sample V increments: <= tol outside B_r(theta*), < 0 outside B_2r(theta*).
CheckResult check_lyapunov_decrease(const Trajectory& traj, const MapPair& maps,
                                    const MinimizerEstimate& minimizer, double alpha,
                                    double exclusion_radius, double tol);

/// h(theta(t)) >= h(theta(t0)) e^{-c k w_f (t-t0)} - delta for t >= transient,
/// using the applied point theta = theta_hat + S(t).
CheckResult check_practical_safety(const Trajectory& traj, const EsConfig& cfg, double delta,
                                   double transient);

/// Once h(theta_hat) reaches `enter_level`, it never drops below `floor`.
CheckResult check_safe_set_retention(const Trajectory& traj, double enter_level, double floor);

/// [G_J - grad J; eta_J - J; G_h - grad h; eta_h - h] at theta_hat.
std::vector<double> estimator_error(const EsState& state, const MapPair& maps);

/// |e(t)| <= max(floor_min, floor_gain * a * G) for t >= settle_time, where G is
/// the largest |[grad J; grad h]| along the run, and some sample before
/// early_time exceeds that floor.
CheckResult check_estimator_decay(const Trajectory& traj, const MapPair& maps, const EsConfig& cfg,
                                  double settle_time, double early_time, double floor_min = 0.5,
                                  double floor_gain = 5.0);

/// Sum of |theta_hat_{k+1} - theta_hat_k| over samples with t <= fraction * t_end.
double transient_total_variation(const Trajectory& traj, double fraction);

}  // namespace safees
