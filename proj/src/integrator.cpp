#include "safees/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "safees/diagnostics.hpp"
#include "safees/error.hpp"

namespace safees {

std::size_t SimSpec::step_count() const {
  validate();
  auto steps = static_cast<std::size_t>(std::llround(t_final / dt));
  if (steps == 0) steps = 1;
  const std::size_t rem = steps % sample_stride;
  if (rem != 0) steps += sample_stride - rem;
  return steps;
}

void SimSpec::validate() const {
  if (!(std::isfinite(dt) && dt > 0.0)) throw ConfigError("dt must be finite and positive");
  if (!(std::isfinite(t_final) && t_final > 0.0)) throw ConfigError("t_final must be finite and positive");
  if (sample_stride == 0) throw ConfigError("sample_stride must be at least 1");
  if (t_final / dt > 1e10) throw ConfigError("step count t_final/dt is unreasonably large");
}

double default_es_dt(const EsConfig& cfg) {
  const double w = *std::max_element(cfg.omegas.begin(), cfg.omegas.end());
  return (2.0 * std::numbers::pi / w) / 50.0;
}

double default_exact_dt(double c) { return 1e-3 / c; }

void check_dither_resolution(const SimSpec& spec, const EsConfig& cfg) {
  if (cfg.omegas.empty()) return;
  const double w = *std::max_element(cfg.omegas.begin(), cfg.omegas.end());
  const double limit = (2.0 * std::numbers::pi / w) / 20.0;
  if (spec.dt <= limit) return;
  const std::string msg = "dt=" + std::to_string(spec.dt) +
                          " resolves the fastest dither period with fewer than 20 steps (limit " +
                          std::to_string(limit) + ")";
  if (!spec.allow_coarse_dt) throw ConfigError(msg);
  std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

std::vector<double> Trajectory::applied(std::size_t i, const EsConfig* cfg) const {
  auto th = theta_hat(i);
  std::vector<double> theta(th.begin(), th.end());
  if (system == SystemKind::Es) {
    if (!cfg) throw Error("ES trajectory needs its EsConfig to recover the applied point");
    const auto s = dither_s(times[i], *cfg);
    for (std::size_t k = 0; k < n; ++k) theta[k] += s[k];
  }
  return theta;
}

Trajectory integrate(const RhsFn& rhs, std::span<const double> x0, const SimSpec& spec,
                     std::size_t n, SystemKind system) {
  const std::size_t steps = spec.step_count();
  const std::size_t dim = x0.size();
  const double dt = spec.dt;

  Trajectory traj;
  traj.system = system;
  traj.n = n;
  traj.state_dim = dim;
  const std::size_t samples = steps / spec.sample_stride + 1;
  traj.times.reserve(samples);
  traj.states.reserve(samples * dim);

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  for (double v : x)
    if (!std::isfinite(v)) throw NumericalAbort(0.0);

  auto record = [&](std::size_t step) {
    traj.times.push_back(static_cast<double>(step) * dt);
    traj.states.insert(traj.states.end(), x.begin(), x.end());
  };
  record(0);

  for (std::size_t step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    rhs(t, x, k1);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    rhs(t + 0.5 * dt, tmp, k2);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    rhs(t + 0.5 * dt, tmp, k3);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + dt * k3[i];
    rhs(t + dt, tmp, k4);
    bool finite = true;
    for (std::size_t i = 0; i < dim; ++i) {
      x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(x[i]);
    }
    if (!finite) throw NumericalAbort(t);
    if ((step + 1) % spec.sample_stride == 0) record(step + 1);
  }
  return traj;
}

void attach_derived(Trajectory& traj, const MapPair& maps, const EsConfig* cfg,
                    const std::optional<LyapunovRef>& lyap) {
  const std::size_t m = traj.size();
  traj.j_hat.resize(m);
  traj.h_hat.resize(m);
  traj.j_applied.resize(m);
  traj.h_applied.resize(m);
  traj.v1.clear();
  traj.v.clear();
  if (lyap) {
    traj.v1.resize(m);
    if (lyap->alpha) traj.v.resize(m);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto th = traj.theta_hat(i);
    traj.j_hat[i] = maps.j.eval(th);
    traj.h_hat[i] = maps.h.eval(th);
    if (traj.system == SystemKind::Es) {
      const auto theta = traj.applied(i, cfg);
      traj.j_applied[i] = maps.j.eval(theta);
      traj.h_applied[i] = maps.h.eval(theta);
    } else {
      traj.j_applied[i] = traj.j_hat[i];
      traj.h_applied[i] = traj.h_hat[i];
    }
    if (lyap) {
      traj.v1[i] = traj.j_hat[i] - lyap->j_star;
      if (lyap->alpha)
        traj.v[i] = lyapunov_v_from_values(traj.j_hat[i], traj.h_hat[i], lyap->j_star, *lyap->alpha);
    }
  }
}

Trajectory simulate_es(const MapPair& maps, const EsConfig& cfg, const EsState& x0,
                       const SimSpec& spec, const std::optional<LyapunovRef>& lyap) {
  const std::size_t n = maps.dim();
  cfg.validate(n);
  check_dither_resolution(spec, cfg);
  if (x0.n() != n) throw Error("initial ES state dimension does not match maps");
  const auto flat = x0.flatten();
  Trajectory traj = integrate(
      [&](double t, std::span<const double> x, std::span<double> dx) { es_rhs(x, t, cfg, maps, dx); },
      flat, spec, n, SystemKind::Es);
  attach_derived(traj, maps, &cfg, lyap);
  return traj;
}

Trajectory simulate_exact(const MapPair& maps, double c, double m_plus,
                          std::span<const double> theta0, const SimSpec& spec,
                          const std::optional<LyapunovRef>& lyap) {
  const std::size_t n = maps.dim();
  if (theta0.size() != n) throw Error("initial condition dimension does not match maps");
  if (!(c > 0.0 && m_plus > 0.0)) throw ConfigError("c and m_plus must be positive");
  Trajectory traj = integrate(
      [&](double, std::span<const double> x, std::span<double> dx) { exact_rhs(x, maps, c, m_plus, dx); },
      theta0, spec, n, SystemKind::Exact);
  attach_derived(traj, maps, nullptr, lyap);
  return traj;
}

Trajectory time_rescale(Trajectory traj, double factor) {
  if (!(factor > 0.0 && std::isfinite(factor))) throw Error("time rescale factor must be positive");
  for (double& t : traj.times) t *= factor;
  return traj;
}

}  // namespace safees
