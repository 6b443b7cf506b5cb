#include "safees/safees.h"

#include <iostream>
#include <string>
#include <vector>

#include "safees/diagnostics.hpp"
#include "safees/dynamics.hpp"
#include "safees/error.hpp"
#include "safees/experiment.hpp"
#include "safees/expr.hpp"
#include "safees/integrator.hpp"

struct safees_maps {
  safees::MapPair maps;
};

struct safees_trajectory {
  safees::Trajectory traj;
  std::optional<safees::EsConfig> cfg;
};

namespace {

thread_local std::string g_last_error;

safees_status fail(safees_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <class F>
safees_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SAFEES_OK;
  } catch (const safees::ParseError& e) {
    return fail(SAFEES_ERR_PARSE, e.what());
  } catch (const safees::DomainError& e) {
    return fail(SAFEES_ERR_DOMAIN, e.what());
  } catch (const safees::ConfigError& e) {
    return fail(SAFEES_ERR_CONFIG, e.what());
  } catch (const safees::NumericalAbort& e) {
    return fail(SAFEES_ERR_NUMERICAL, e.what());
  } catch (const safees::DegenerateInput& e) {
    return fail(SAFEES_ERR_DEGENERATE, e.what());
  } catch (const safees::AssumptionViolation& e) {
    return fail(SAFEES_ERR_DEGENERATE, e.what());
  } catch (const std::exception& e) {
    return fail(SAFEES_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SAFEES_ERR_INTERNAL, "unknown error");
  }
}

safees::EsConfig to_config(const safees_es_config& c, std::size_t n) {
  if (n > 0 && !c.omegas) throw safees::ConfigError("omegas must not be null");
  safees::EsConfig cfg{c.k, c.c, c.omega_f, c.m_plus, c.a, std::vector<double>(c.omegas, c.omegas + n)};
  cfg.validate(n);
  return cfg;
}

safees::SimSpec to_spec(const safees_sim_spec& s, safees::SystemKind system) {
  safees::SimSpec spec;
  spec.dt = s.dt;
  spec.t_final = s.t_final;
  spec.sample_stride = s.sample_stride == 0 ? 1 : s.sample_stride;
  spec.system = system;
  spec.allow_coarse_dt = s.allow_coarse_dt != 0;
  spec.validate();
  return spec;
}

#define SAFEES_REQUIRE(cond, what) \
  if (!(cond)) return fail(SAFEES_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* safees_version(void) { return "1.0.0"; }

const char* safees_last_error(void) { return g_last_error.c_str(); }

safees_status safees_maps_create(const char* j_expr, const char* h_expr, size_t n, safees_maps** out) {
  SAFEES_REQUIRE(j_expr && h_expr && out, "null argument");
  SAFEES_REQUIRE(n > 0, "dimension must be positive");
  *out = nullptr;
  return guarded([&] { *out = new safees_maps{safees::MapPair::parse(j_expr, h_expr, n)}; });
}

void safees_maps_destroy(safees_maps* maps) { delete maps; }

size_t safees_maps_dim(const safees_maps* maps) { return maps ? maps->maps.dim() : 0; }

safees_status safees_maps_eval(const safees_maps* maps, const double* theta, double* j_out, double* h_out) {
  SAFEES_REQUIRE(maps && theta, "null argument");
  return guarded([&] {
    const std::span<const double> x(theta, maps->maps.dim());
    if (j_out) *j_out = maps->maps.j.eval(x);
    if (h_out) *h_out = maps->maps.h.eval(x);
  });
}

safees_status safees_maps_grad(const safees_maps* maps, const double* theta, double* grad_j, double* grad_h) {
  SAFEES_REQUIRE(maps && theta, "null argument");
  return guarded([&] {
    const std::size_t n = maps->maps.dim();
    const std::span<const double> x(theta, n);
    if (grad_j) maps->maps.j.value_and_grad(x, std::span<double>(grad_j, n));
    if (grad_h) maps->maps.h.value_and_grad(x, std::span<double>(grad_h, n));
  });
}

safees_status safees_es_rhs(const safees_maps* maps, const safees_es_config* cfg, double t, const double* x,
                            double* dx) {
  SAFEES_REQUIRE(maps && cfg && x && dx, "null argument");
  return guarded([&] {
    const std::size_t n = maps->maps.dim();
    const safees::EsConfig c = to_config(*cfg, n);
    const std::size_t m = safees::EsState::flat_size(n);
    safees::es_rhs(std::span<const double>(x, m), t, c, maps->maps, std::span<double>(dx, m));
  });
}

safees_status safees_exact_rhs(const safees_maps* maps, double c, double m_plus, const double* theta,
                               double* dtheta) {
  SAFEES_REQUIRE(maps && theta && dtheta, "null argument");
  SAFEES_REQUIRE(c > 0.0 && m_plus > 0.0, "c and m_plus must be positive");
  return guarded([&] {
    const std::size_t n = maps->maps.dim();
    safees::exact_rhs(std::span<const double>(theta, n), maps->maps, c, m_plus, std::span<double>(dtheta, n));
  });
}

safees_status safees_simulate_es(const safees_maps* maps, const safees_es_config* cfg, const double* x0,
                                 const safees_sim_spec* spec, safees_trajectory** out) {
  SAFEES_REQUIRE(maps && cfg && x0 && spec && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    const std::size_t n = maps->maps.dim();
    const safees::EsConfig c = to_config(*cfg, n);
    const safees::SimSpec s = to_spec(*spec, safees::SystemKind::Es);
    const auto state = safees::EsState::unpack(std::span<const double>(x0, safees::EsState::flat_size(n)), n);
    *out = new safees_trajectory{safees::simulate_es(maps->maps, c, state, s), c};
  });
}

safees_status safees_simulate_exact(const safees_maps* maps, double c, double m_plus, const double* theta0,
                                    const safees_sim_spec* spec, safees_trajectory** out) {
  SAFEES_REQUIRE(maps && theta0 && spec && out, "null argument");
  SAFEES_REQUIRE(c > 0.0 && m_plus > 0.0, "c and m_plus must be positive");
  *out = nullptr;
  return guarded([&] {
    const safees::SimSpec s = to_spec(*spec, safees::SystemKind::Exact);
    *out = new safees_trajectory{
        safees::simulate_exact(maps->maps, c, m_plus, std::span<const double>(theta0, maps->maps.dim()), s),
        std::nullopt};
  });
}

void safees_trajectory_destroy(safees_trajectory* traj) { delete traj; }

size_t safees_trajectory_size(const safees_trajectory* traj) { return traj ? traj->traj.size() : 0; }

size_t safees_trajectory_state_dim(const safees_trajectory* traj) { return traj ? traj->traj.state_dim : 0; }

safees_status safees_trajectory_time(const safees_trajectory* traj, size_t i, double* t) {
  SAFEES_REQUIRE(traj && t, "null argument");
  SAFEES_REQUIRE(i < traj->traj.size(), "sample index out of range");
  *t = traj->traj.times[i];
  return SAFEES_OK;
}

safees_status safees_trajectory_state(const safees_trajectory* traj, size_t i, double* x) {
  SAFEES_REQUIRE(traj && x, "null argument");
  SAFEES_REQUIRE(i < traj->traj.size(), "sample index out of range");
  const auto s = traj->traj.state(i);
  std::copy(s.begin(), s.end(), x);
  return SAFEES_OK;
}

safees_status safees_trajectory_h(const safees_trajectory* traj, size_t i, double* h_hat, double* h_applied) {
  SAFEES_REQUIRE(traj, "null argument");
  SAFEES_REQUIRE(i < traj->traj.size(), "sample index out of range");
  if (h_hat) *h_hat = traj->traj.h_hat[i];
  if (h_applied) *h_applied = traj->traj.h_applied[i];
  return SAFEES_OK;
}

safees_status safees_trajectory_write_csv(const safees_trajectory* traj, const char* path, size_t stride) {
  SAFEES_REQUIRE(traj && path, "null argument");
  return guarded([&] {
    safees::write_trajectory_csv(path, traj->traj, traj->cfg ? &*traj->cfg : nullptr, stride == 0 ? 1 : stride);
  });
}

safees_status safees_validate_frequencies(const int64_t* num, const int64_t* den, size_t n, int* ok) {
  SAFEES_REQUIRE((num || n == 0) && ok, "null argument");
  return guarded([&] {
    std::vector<safees::Rational> omegas;
    for (size_t i = 0; i < n; ++i) omegas.push_back(safees::Rational::make(num[i], den ? den[i] : 1));
    *ok = safees::validate_frequencies(omegas).ok ? 1 : 0;
  });
}

int safees_run_command(const char* command, const safees_command_options* options) {
  g_last_error.clear();
  if (!command) {
    g_last_error = "null command";
    return safees::kExitUsage;
  }
  const std::string cmd = command;
  safees_command_options defaults{};
  const safees_command_options& opt = options ? *options : defaults;
  try {
    if (cmd == "paper-example") {
      const std::string out = opt.out_dir ? opt.out_dir : "out";
      return safees::cmd_paper_example(out, opt.workers == 0 ? 1 : opt.workers, std::cerr);
    }
    if (cmd != "simulate" && cmd != "exact" && cmd != "check") {
      g_last_error = "unknown command '" + cmd + "'";
      std::cerr << "error: " << g_last_error << "\n";
      return safees::kExitUsage;
    }
    if (!opt.config_path) throw safees::ConfigError("--config is required for " + cmd);
    std::vector<std::string> overrides;
    for (size_t i = 0; i < opt.override_count; ++i)
      if (opt.overrides && opt.overrides[i]) overrides.emplace_back(opt.overrides[i]);
    safees::ExperimentConfig cfg = safees::ExperimentConfig::from_file(opt.config_path, overrides);
    if (opt.out_dir) cfg.output = opt.out_dir;
    if (opt.workers) cfg.workers = opt.workers;
    if (opt.has_seed) cfg.seed = opt.seed;
    if (cmd == "simulate") return safees::cmd_simulate(cfg, std::cerr);
    if (cmd == "exact") return safees::cmd_exact(cfg, std::cerr);
    return safees::cmd_check(cfg, std::cerr);
  } catch (const safees::ConfigError& e) {
    g_last_error = e.what();
    std::cerr << "config error: " << e.what() << "\n";
    return safees::kExitUsage;
  } catch (const safees::ParseError& e) {
    g_last_error = e.what();
    std::cerr << "config error: " << e.what() << "\n";
    return safees::kExitUsage;
  } catch (const safees::NumericalAbort& e) {
    g_last_error = e.what();
    std::cerr << "numerical abort: " << e.what() << "\n";
    return safees::kExitNumerical;
  } catch (const safees::DomainError& e) {
    g_last_error = e.what();
    std::cerr << "numerical abort: " << e.what() << "\n";
    return safees::kExitNumerical;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    std::cerr << "error: " << e.what() << "\n";
    return safees::kExitCheckFailed;
  }
}

}  // extern "C"
