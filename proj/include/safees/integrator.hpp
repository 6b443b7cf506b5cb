#pragma once

// Fixed-step classical RK4 with uniform sampling.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "safees/dynamics.hpp"
#include "safees/expr.hpp"

namespace safees {

enum class SystemKind { Es, Exact };

struct SimSpec {
  double dt = 0.0;
  double t_final = 0.0;
  std::size_t sample_stride = 1;
  SystemKind system = SystemKind::Es;
  /// Accept ES steps coarser than 1/20 of the fastest dither period (a warning
  /// is printed instead of an error).
  bool allow_coarse_dt = false;

  /// round(t_final/dt), rounded up to a multiple of sample_stride.
  std::size_t step_count() const;
  void validate() const;
};

/// Default ES step: 1/50 of the fastest dither period.
double default_es_dt(const EsConfig& cfg);
/// Default EXACT step: 1e-3 of the barrier time constant 1/c.
double default_exact_dt(double c);

/// Throws ConfigError if `dt` under-resolves the dither (unless allowed).
void check_dither_resolution(const SimSpec& spec, const EsConfig& cfg);

/// Reference constants for the Lyapunov columns.
struct LyapunovRef {
  double j_star = 0.0;
  std::optional<double> alpha;
};

struct Trajectory {
  SystemKind system = SystemKind::Es;
  std::size_t n = 0;          // parameter dimension
  std::size_t state_dim = 0;  // 3n+2 (ES) or n (EXACT)
  std::vector<double> times;
  std::vector<double> states;  // row-major, samples x state_dim

  // Derived scalars at each sample; empty when not attached. For EXACT runs
  // the applied point equals theta_hat.
  std::vector<double> j_hat, h_hat, j_applied, h_applied;
  std::vector<double> v1, v;  // at theta_hat, present when a LyapunovRef is given

  std::size_t size() const noexcept { return times.size(); }
  std::span<const double> state(std::size_t i) const {
    return std::span<const double>(states).subspan(i * state_dim, state_dim);
  }
  std::span<const double> theta_hat(std::size_t i) const { return state(i).first(n); }
  /// theta_hat + S(t) for ES samples, theta_hat for EXACT samples.
  std::vector<double> applied(std::size_t i, const EsConfig* cfg) const;
};

using RhsFn = std::function<void(double t, std::span<const double> x, std::span<double> dx)>;

/// Integrates dx/dt = rhs(t, x). Throws NumericalAbort on a non-finite state.
/// The returned trajectory has no derived columns.
Trajectory integrate(const RhsFn& rhs, std::span<const double> x0, const SimSpec& spec,
                     std::size_t n, SystemKind system);

Trajectory simulate_es(const MapPair& maps, const EsConfig& cfg, const EsState& x0,
                       const SimSpec& spec, const std::optional<LyapunovRef>& lyap = std::nullopt);

Trajectory simulate_exact(const MapPair& maps, double c, double m_plus,
                          std::span<const double> theta0, const SimSpec& spec,
                          const std::optional<LyapunovRef>& lyap = std::nullopt);

/// Fills the derived columns. `cfg` is required for ES trajectories.
void attach_derived(Trajectory& traj, const MapPair& maps, const EsConfig* cfg,
                    const std::optional<LyapunovRef>& lyap);

Trajectory time_rescale(Trajectory traj, double factor);

}  // namespace safees
