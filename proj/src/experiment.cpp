#include "safees/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "safees/error.hpp"

namespace safees {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// JSON helpers

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

double get_number(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError("missing '" + std::string(key) + "' in " + where);
  if (!it->is_number()) throw ConfigError("'" + std::string(key) + "' in " + where + " must be a number");
  return it->get<double>();
}

std::optional<double> opt_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return std::nullopt;
  return get_number(obj, key, where);
}

std::size_t get_count(const json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("'" + what + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::vector<double> get_vector(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError("'" + what + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("'" + what + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Box get_box(const json& v, const std::string& what, std::size_t n) {
  check_keys(v, what, {"lower", "upper"});
  if (!v.contains("lower") || !v.contains("upper")) throw ConfigError(what + " needs 'lower' and 'upper'");
  Box b{get_vector(v["lower"], what + ".lower"), get_vector(v["upper"], what + ".upper")};
  if (b.lower.size() != n || b.upper.size() != n) throw ConfigError(what + " bounds must have length dim");
  for (std::size_t i = 0; i < n; ++i)
    if (!(b.lower[i] <= b.upper[i])) throw ConfigError(what + " lower bound exceeds upper bound");
  return b;
}

Rational get_rational(const json& v) {
  if (v.is_number_integer()) return Rational::make(v.get<std::int64_t>(), 1);
  if (v.is_number_float()) return Rational::parse(v.dump());
  if (v.is_string()) return Rational::parse(v.get<std::string>());
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer())
    return Rational::make(v[0].get<std::int64_t>(), v[1].get<std::int64_t>());
  throw ConfigError("frequencies must be integers, \"p/q\" strings, decimals or [p, q] pairs");
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like path.to.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override path: " + path);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double vec_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.csv", prefix, i);
  return buf;
}

ordered_json minimizer_json(const MinimizerEstimate& m) {
  ordered_json j;
  j["theta_star"] = m.theta_star;
  j["j_star"] = m.j_star;
  j["h_at_star"] = m.h_at_star;
  j["on_boundary"] = m.on_boundary;
  j["collinearity_residual"] = m.collinearity_residual;
  return j;
}

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

double max_grad_h_along(const Trajectory& traj, const MapPair& maps) {
  double g = 0.0;
  std::vector<double> gh(maps.dim());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    maps.h.value_and_grad(traj.theta_hat(i), gh);
    double s = 0.0;
    for (double x : gh) s += x * x;
    g = std::max(g, std::sqrt(s));
  }
  return g;
}

double default_delta(const ExperimentConfig& cfg, const Trajectory& traj, const MapPair& maps) {
  if (cfg.diagnostics.delta) return *cfg.diagnostics.delta;
  return cfg.es.a * max_grad_h_along(traj, maps);
}

double default_transient(const ExperimentConfig& cfg) {
  return cfg.diagnostics.transient ? *cfg.diagnostics.transient : 5.0 / cfg.es.omega_f;
}

void require_valid_frequencies(const ExperimentConfig& cfg) {
  const FrequencyVerdict v = validate_frequencies(cfg.omegas_exact);
  if (v.ok) return;
  std::string msg = "dither frequencies violate the separation conditions:";
  for (const auto& viol : v.violations) msg += " " + viol.describe() + ";";
  throw ConfigError(msg);
}

using Sink = std::function<void(std::size_t, RunResult&)>;

std::vector<RunResult> run_batch_impl(const ExperimentConfig& cfg, SystemKind system, const MapPair& maps,
                                      const MinimizerEstimate& minimizer,
                                      const std::optional<LyapunovRef>& lyap, bool keep, const Sink& sink) {
  const std::size_t count = cfg.initial_conditions.size();
  const SimSpec spec = cfg.resolved_sim(system);
  std::vector<RunResult> results(count);

  auto run_one = [&](std::size_t idx) {
    RunResult out;
    RunRecord& rec = out.record;
    rec.initial = cfg.initial_conditions[idx];
    rec.steps = spec.step_count();
    const auto start = std::chrono::steady_clock::now();
    try {
      Trajectory traj = system == SystemKind::Es
                            ? simulate_es(maps, cfg.es, cfg.initial_state(rec.initial), spec, lyap)
                            : simulate_exact(maps, cfg.es.c, cfg.es.m_plus, rec.initial, spec, lyap);
      const std::size_t last = traj.size() - 1;
      rec.final_theta.assign(traj.theta_hat(last).begin(), traj.theta_hat(last).end());
      rec.final_distance = vec_distance(rec.final_theta, minimizer.theta_star);
      rec.min_h = *std::min_element(traj.h_applied.begin(), traj.h_applied.end());
      rec.safety_margin = system == SystemKind::Es
                              ? check_practical_safety(traj, cfg.es, default_delta(cfg, traj, maps),
                                                       default_transient(cfg))
                                    .margin
                              : check_invariance(traj, cfg.es.c, cfg.diagnostics.invariance_tol).margin;
      rec.converged = rec.final_distance <= cfg.diagnostics.convergence_radius;
      out.trajectory = std::move(traj);
    } catch (const NumericalAbort& e) {
      rec.aborted = true;
      rec.abort_time = e.last_valid_time();
      rec.error = e.what();
    } catch (const DomainError& e) {
      rec.aborted = true;
      rec.abort_time = std::numeric_limits<double>::quiet_NaN();
      rec.error = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  };

  auto deliver = [&](std::size_t idx, RunResult&& r) {
    results[idx] = std::move(r);
    if (sink) sink(idx, results[idx]);
    if (!keep) results[idx].trajectory.reset();
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) deliver(i, run_one(i));
    return results;
  }

  // Workers fill slots; this thread hands them to the sink in IC order.
  std::vector<std::optional<RunResult>> slots(count);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t idx = next.fetch_add(1);
        if (idx >= count) return;
        try {
          RunResult r = run_one(idx);
          std::lock_guard<std::mutex> lock(mu);
          slots[idx] = std::move(r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          slots[idx] = RunResult{};
        }
        cv.notify_all();
      }
    });
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return slots[i].has_value(); });
    RunResult r = std::move(*slots[i]);
    slots[i].reset();
    lock.unlock();
    if (!failure) deliver(i, std::move(r));
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

ordered_json run_record_json(std::size_t idx, const RunRecord& r) {
  ordered_json j;
  j["index"] = idx;
  j["initial_theta_hat"] = r.initial;
  if (r.aborted) {
    j["status"] = "aborted";
    j["abort_time"] = finite_or_null(r.abort_time);
    j["error"] = r.error;
    j["steps"] = r.steps;
    return j;
  }
  j["status"] = "ok";
  j["final_theta_hat"] = r.final_theta;
  j["final_distance"] = r.final_distance;
  j["min_h"] = r.min_h;
  j["safety_margin"] = finite_or_null(r.safety_margin);
  j["converged"] = r.converged;
  j["steps"] = r.steps;
  return j;
}

std::string timing_json(const std::vector<RunResult>& runs) {
  ordered_json j = ordered_json::array();
  for (std::size_t i = 0; i < runs.size(); ++i)
    j.push_back(ordered_json{{"index", i}, {"wall_seconds", runs[i].record.wall_seconds}});
  return j.dump(2) + "\n";
}

bool any_aborted(const std::vector<RunResult>& runs) {
  return std::any_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.record.aborted; });
}

std::optional<LyapunovRef> exact_lyapunov(const ExperimentConfig& cfg, const MapPair& maps,
                                          const MinimizerEstimate& minimizer, std::ostream& log) {
  LyapunovRef ref{minimizer.j_star, cfg.diagnostics.alpha};
  if (!ref.alpha) {
    try {
      const GridSpec grid{cfg.diagnostics.search_box, cfg.diagnostics.alpha_counts};
      ref.alpha = select_alpha(maps, cfg.diagnostics.rho, grid).alpha;
    } catch (const Error& e) {
      log << "note: alpha selection failed (" << e.what() << "); V column omitted\n";
    }
  }
  return ref;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_json_text(std::string_view text, std::span<const std::string> overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  check_keys(doc, "config",
             {"dim", "j_expr", "h_expr", "es", "sim", "initial_conditions", "estimator_init", "diagnostics",
              "output", "csv_stride", "workers", "seed"});

  ExperimentConfig cfg;
  if (!doc.contains("dim")) throw ConfigError("missing 'dim'");
  cfg.dim = get_count(doc["dim"], "dim");
  if (cfg.dim == 0) throw ConfigError("'dim' must be positive");
  const std::size_t n = cfg.dim;
  for (const char* key : {"j_expr", "h_expr"}) {
    if (doc.contains(key) && doc[key].is_number()) doc[key] = doc[key].dump();
    if (!doc.contains(key) || !doc[key].is_string()) throw ConfigError(std::string("missing string '") + key + "'");
  }
  cfg.j_expr = doc["j_expr"].get<std::string>();
  cfg.h_expr = doc["h_expr"].get<std::string>();

  if (!doc.contains("es")) throw ConfigError("missing 'es' section");
  const json& es = doc["es"];
  check_keys(es, "es", {"k", "c", "omega_f", "m_plus", "a", "omegas"});
  cfg.es.c = get_number(es, "c", "es");
  cfg.es.m_plus = get_number(es, "m_plus", "es");
  cfg.es.k = opt_number(es, "k", "es").value_or(0.0);
  cfg.es.omega_f = opt_number(es, "omega_f", "es").value_or(0.0);
  cfg.es.a = opt_number(es, "a", "es").value_or(0.0);
  if (es.contains("omegas")) {
    if (!es["omegas"].is_array()) throw ConfigError("'es.omegas' must be an array");
    for (const auto& w : es["omegas"]) {
      cfg.omegas_exact.push_back(get_rational(w));
      cfg.es.omegas.push_back(cfg.omegas_exact.back().value());
    }
  }

  if (!doc.contains("sim")) throw ConfigError("missing 'sim' section");
  const json& sim = doc["sim"];
  check_keys(sim, "sim", {"dt", "t_final", "sample_stride", "system", "allow_coarse_dt"});
  cfg.sim.dt = opt_number(sim, "dt", "sim").value_or(0.0);
  cfg.sim.t_final = get_number(sim, "t_final", "sim");
  if (sim.contains("sample_stride")) cfg.sim.sample_stride = get_count(sim["sample_stride"], "sim.sample_stride");
  if (sim.contains("system")) {
    const std::string s = sim["system"].is_string() ? sim["system"].get<std::string>() : "";
    if (s == "es" || s == "ES") cfg.sim.system = SystemKind::Es;
    else if (s == "exact" || s == "EXACT") cfg.sim.system = SystemKind::Exact;
    else throw ConfigError("'sim.system' must be \"es\" or \"exact\"");
  }
  if (sim.contains("allow_coarse_dt")) {
    if (!sim["allow_coarse_dt"].is_boolean()) throw ConfigError("'sim.allow_coarse_dt' must be a boolean");
    cfg.sim.allow_coarse_dt = sim["allow_coarse_dt"].get<bool>();
  }

  if (!doc.contains("initial_conditions")) throw ConfigError("missing 'initial_conditions'");
  const json& ics = doc["initial_conditions"];
  if (ics.is_array()) {
    for (const auto& ic : ics) {
      auto v = get_vector(ic, "initial_conditions[i]");
      if (v.size() != n) throw ConfigError("initial condition length must equal dim");
      cfg.initial_conditions.push_back(std::move(v));
    }
  } else if (ics.is_object()) {
    const json& g = ics.contains("grid") ? ics["grid"] : ics;
    check_keys(g, "initial_conditions.grid", {"lower", "upper", "counts"});
    GridSpec grid;
    grid.box = get_box(json{{"lower", g.value("lower", json())}, {"upper", g.value("upper", json())}},
                       "initial_conditions.grid", n);
    if (!g.contains("counts") || !g["counts"].is_array()) throw ConfigError("initial_conditions.grid needs 'counts'");
    for (const auto& c : g["counts"]) grid.counts.push_back(get_count(c, "initial_conditions.grid.counts"));
    grid.validate(n);
    for_each_grid_point(grid, [&](std::span<const double> p) { cfg.initial_conditions.emplace_back(p.begin(), p.end()); });
  } else {
    throw ConfigError("'initial_conditions' must be a list of vectors or a grid object");
  }
  if (cfg.initial_conditions.empty()) throw ConfigError("no initial conditions given");

  if (doc.contains("estimator_init")) {
    cfg.estimator_init = get_vector(doc["estimator_init"], "estimator_init");
    if (cfg.estimator_init.size() != 2 * n + 2) throw ConfigError("'estimator_init' must have length 2*dim+2");
  } else {
    cfg.estimator_init.assign(2 * n + 2, 0.0);
  }

  // Default sampling box: IC bounding box padded by 1.
  Box ic_box{cfg.initial_conditions[0], cfg.initial_conditions[0]};
  for (const auto& ic : cfg.initial_conditions)
    for (std::size_t i = 0; i < n; ++i) {
      ic_box.lower[i] = std::min(ic_box.lower[i], ic[i]);
      ic_box.upper[i] = std::max(ic_box.upper[i], ic[i]);
    }
  for (std::size_t i = 0; i < n; ++i) {
    ic_box.lower[i] -= 1.0;
    ic_box.upper[i] += 1.0;
  }
  DiagnosticsConfig& d = cfg.diagnostics;
  d.search_box = ic_box;
  if (doc.contains("diagnostics")) {
    const json& dj = doc["diagnostics"];
    check_keys(dj, "diagnostics",
               {"gradients", "gradient_points", "gradient_box", "search_box", "minimizer_coarse", "refine_iters",
                "rho", "alpha_counts", "alpha", "angle", "r_star", "invariance_tol", "lyapunov_tol",
                "exclusion_radius", "delta", "transient", "convergence_radius", "estimator", "estimator_floor",
                "estimator_gain"});
    auto flag = [&](const char* key, bool& out) {
      if (!dj.contains(key)) return;
      if (!dj[key].is_boolean()) throw ConfigError(std::string("'diagnostics.") + key + "' must be a boolean");
      out = dj[key].get<bool>();
    };
    auto positive = [&](const char* key, double& out) {
      if (auto v = opt_number(dj, key, "diagnostics")) {
        if (!(*v > 0.0)) throw ConfigError(std::string("'diagnostics.") + key + "' must be positive");
        out = *v;
      }
    };
    flag("gradients", d.gradients);
    flag("angle", d.angle);
    flag("estimator", d.estimator);
    if (dj.contains("gradient_points")) d.gradient_points = get_count(dj["gradient_points"], "diagnostics.gradient_points");
    if (dj.contains("search_box")) d.search_box = get_box(dj["search_box"], "diagnostics.search_box", n);
    if (dj.contains("gradient_box")) d.gradient_box = get_box(dj["gradient_box"], "diagnostics.gradient_box", n);
    if (dj.contains("minimizer_coarse")) d.minimizer_coarse = get_count(dj["minimizer_coarse"], "diagnostics.minimizer_coarse");
    if (dj.contains("refine_iters")) d.refine_iters = get_count(dj["refine_iters"], "diagnostics.refine_iters");
    if (auto v = opt_number(dj, "rho", "diagnostics")) {
      if (*v > 0.0) throw ConfigError("'diagnostics.rho' must be nonpositive");
      d.rho = *v;
    }
    if (dj.contains("alpha_counts")) {
      if (!dj["alpha_counts"].is_array()) throw ConfigError("'diagnostics.alpha_counts' must be an array");
      for (const auto& c : dj["alpha_counts"]) d.alpha_counts.push_back(get_count(c, "diagnostics.alpha_counts"));
      if (d.alpha_counts.size() != n) throw ConfigError("'diagnostics.alpha_counts' must have length dim");
    }
    if (dj.contains("alpha")) {
      double a = 0.0;
      positive("alpha", a);
      d.alpha = a;
    }
    positive("r_star", d.r_star);
    positive("invariance_tol", d.invariance_tol);
    positive("lyapunov_tol", d.lyapunov_tol);
    positive("exclusion_radius", d.exclusion_radius);
    positive("convergence_radius", d.convergence_radius);
    positive("estimator_floor", d.estimator_floor);
    positive("estimator_gain", d.estimator_gain);
    if (auto v = opt_number(dj, "delta", "diagnostics")) {
      if (!(*v >= 0.0)) throw ConfigError("'diagnostics.delta' must be nonnegative");
      d.delta = *v;
    }
    if (auto v = opt_number(dj, "transient", "diagnostics")) {
      if (!(*v >= 0.0)) throw ConfigError("'diagnostics.transient' must be nonnegative");
      d.transient = *v;
    }
  }
  if (d.gradient_box.lower.empty()) d.gradient_box = d.search_box;
  if (d.alpha_counts.empty()) d.alpha_counts.assign(n, d.minimizer_coarse);
  if (d.minimizer_coarse == 0) throw ConfigError("'diagnostics.minimizer_coarse' must be at least 1");
  for (std::size_t c : d.alpha_counts)
    if (c == 0) throw ConfigError("'diagnostics.alpha_counts' entries must be at least 1");

  if (doc.contains("output")) {
    if (!doc["output"].is_string()) throw ConfigError("'output' must be a string");
    cfg.output = doc["output"].get<std::string>();
  }
  if (doc.contains("csv_stride")) cfg.csv_stride = std::max<std::size_t>(1, get_count(doc["csv_stride"], "csv_stride"));
  if (doc.contains("workers")) cfg.workers = std::max<std::size_t>(1, get_count(doc["workers"], "workers"));
  if (doc.contains("seed")) cfg.seed = get_count(doc["seed"], "seed");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path, std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), overrides);
}

ExperimentConfig ExperimentConfig::two_lobe_example(double c, double k) {
  ExperimentConfig cfg;
  cfg.dim = 2;
  cfg.j_expr = std::string(kTwoLobeObjective);
  cfg.h_expr = std::string(kTwoLobeBarrier);
  cfg.es = EsConfig{k, c, 10.0, 1e4, 0.1, {10.0, 13.0}};
  cfg.omegas_exact = {Rational::make(10), Rational::make(13)};
  cfg.sim.dt = 2.0 * std::numbers::pi / (50.0 * 13.0);
  cfg.sim.t_final = 40.0 / (c * k * cfg.es.omega_f);
  cfg.sim.sample_stride = 10;
  cfg.sim.system = SystemKind::Es;
  const GridSpec ic_grid{Box{{-3.5, -2.0}, {3.5, 2.0}}, {7, 5}};
  for_each_grid_point(ic_grid, [&](std::span<const double> p) { cfg.initial_conditions.emplace_back(p.begin(), p.end()); });
  cfg.estimator_init.assign(6, 0.0);
  cfg.diagnostics.search_box = Box{{-4.0, -4.0}, {4.0, 4.0}};
  cfg.diagnostics.gradient_box = cfg.diagnostics.search_box;
  cfg.diagnostics.alpha_counts = {400, 400};
  cfg.diagnostics.delta = 0.05;
  cfg.csv_stride = 100;
  return cfg;
}

MapPair ExperimentConfig::maps() const {
  try {
    return MapPair::parse(j_expr, h_expr, dim);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("expression error: ") + e.what());
  }
}

EsState ExperimentConfig::initial_state(std::span<const double> theta0) const {
  const std::size_t n = dim;
  std::vector<double> flat(EsState::flat_size(n));
  std::copy(theta0.begin(), theta0.end(), flat.begin());
  std::copy(estimator_init.begin(), estimator_init.end(), flat.begin() + n);
  return EsState::unpack(flat, n);
}

SimSpec ExperimentConfig::resolved_sim(SystemKind system) const {
  SimSpec s = sim;
  s.system = system;
  if (!(s.dt > 0.0)) s.dt = system == SystemKind::Es ? default_es_dt(es) : default_exact_dt(es.c);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Batch + IO

std::vector<RunResult> run_batch(const ExperimentConfig& cfg, SystemKind system, const MapPair& maps,
                                 const MinimizerEstimate& minimizer, const std::optional<LyapunovRef>& lyap,
                                 bool keep_trajectories) {
  return run_batch_impl(cfg, system, maps, minimizer, lyap, keep_trajectories, {});
}

MinimizerEstimate minimizer_for(const ExperimentConfig& cfg, const MapPair& maps) {
  std::size_t coarse = cfg.diagnostics.minimizer_coarse;
  // Keep the coarse pass under ~4e6 samples in higher dimensions.
  while (coarse > 2 && std::pow(static_cast<double>(coarse), static_cast<double>(cfg.dim)) > 4e6) coarse /= 2;
  return find_constrained_minimizer(maps, cfg.diagnostics.search_box, coarse, cfg.diagnostics.refine_iters);
}

std::vector<std::string> csv_header(const Trajectory& traj) {
  const std::size_t n = traj.n;
  std::vector<std::string> h{"t"};
  auto series = [&](const std::string& prefix) {
    for (std::size_t i = 1; i <= n; ++i) h.push_back(prefix + std::to_string(i));
  };
  if (traj.system == SystemKind::Es) {
    series("theta_hat");
    series("theta");
    series("G_J");
    h.push_back("eta_J");
    series("G_h");
    h.push_back("eta_h");
    for (const char* s : {"J_theta_hat", "h_theta_hat", "J_theta", "h_theta"}) h.push_back(s);
  } else {
    series("theta");
    h.push_back("J");
    h.push_back("h");
    if (!traj.v1.empty()) h.push_back("V1");
    if (!traj.v.empty()) h.push_back("V");
  }
  return h;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, const EsConfig* cfg, std::size_t stride) {
  if (traj.h_applied.size() != traj.size()) throw Error("trajectory has no derived columns");
  if (stride == 0) stride = 1;
  std::string out;
  const auto header = csv_header(traj);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  auto cell = [&](double v) {
    out += ',';
    out += fmt17(v);
  };
  const std::size_t n = traj.n;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (i % stride != 0 && i + 1 != traj.size()) continue;
    out += fmt17(traj.times[i]);
    const auto x = traj.state(i);
    if (traj.system == SystemKind::Es) {
      for (std::size_t k = 0; k < n; ++k) cell(x[k]);
      for (double v : traj.applied(i, cfg)) cell(v);
      for (std::size_t k = n; k < x.size(); ++k) cell(x[k]);
      cell(traj.j_hat[i]);
      cell(traj.h_hat[i]);
      cell(traj.j_applied[i]);
      cell(traj.h_applied[i]);
    } else {
      for (double v : x) cell(v);
      cell(traj.j_hat[i]);
      cell(traj.h_hat[i]);
      if (!traj.v1.empty()) cell(traj.v1[i]);
      if (!traj.v.empty()) cell(traj.v[i]);
    }
    out += '\n';
  }
  write_text(path, out);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV file " + path);
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) table.header.push_back(col);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    for (;;) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      if (end == p) throw Error("malformed CSV number in " + path);
      if (*end == ',') {
        p = end + 1;
      } else {
        break;
      }
    }
    if (row.size() != table.header.size()) throw Error("CSV row width does not match header in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string summary_json(const std::string& command, SystemKind system, const MinimizerEstimate& minimizer,
                         const std::vector<RunResult>& runs) {
  ordered_json doc;
  doc["command"] = command;
  doc["system"] = system == SystemKind::Es ? "es" : "exact";
  doc["minimizer"] = minimizer_json(minimizer);
  doc["runs"] = ordered_json::array();
  bool all_converged = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    doc["runs"].push_back(run_record_json(i, runs[i].record));
    all_converged = all_converged && !runs[i].record.aborted && runs[i].record.converged;
  }
  doc["all_converged"] = all_converged;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  const MapPair maps = cfg.maps();
  cfg.es.validate(cfg.dim);
  require_valid_frequencies(cfg);
  check_dither_resolution(cfg.resolved_sim(SystemKind::Es), cfg.es);
  const MinimizerEstimate minimizer = minimizer_for(cfg, maps);
  const fs::path out(cfg.output);
  fs::create_directories(out);
  auto runs = run_batch_impl(cfg, SystemKind::Es, maps, minimizer, std::nullopt, false,
                             [&](std::size_t i, RunResult& r) {
                               if (r.trajectory)
                                 write_trajectory_csv((out / indexed_name("traj", i)).string(), *r.trajectory,
                                                      &cfg.es, cfg.csv_stride);
                               log << "run " << i << (r.record.aborted ? " aborted: " + r.record.error : " done")
                                   << "\n";
                             });
  write_text(out / "summary.json", summary_json("simulate", SystemKind::Es, minimizer, runs));
  write_text(out / "timing.json", timing_json(runs));
  return any_aborted(runs) ? kExitNumerical : kExitOk;
}

int cmd_exact(const ExperimentConfig& cfg, std::ostream& log) {
  const MapPair maps = cfg.maps();
  if (!(cfg.es.c > 0.0 && cfg.es.m_plus > 0.0)) throw ConfigError("es.c and es.m_plus must be positive");
  const MinimizerEstimate minimizer = minimizer_for(cfg, maps);
  const auto lyap = exact_lyapunov(cfg, maps, minimizer, log);
  const fs::path out(cfg.output);
  fs::create_directories(out);
  auto runs = run_batch_impl(cfg, SystemKind::Exact, maps, minimizer, lyap, false,
                             [&](std::size_t i, RunResult& r) {
                               if (r.trajectory)
                                 write_trajectory_csv((out / indexed_name("exact", i)).string(), *r.trajectory,
                                                      nullptr, cfg.csv_stride);
                               log << "run " << i << (r.record.aborted ? " aborted: " + r.record.error : " done")
                                   << "\n";
                             });
  write_text(out / "summary.json", summary_json("exact", SystemKind::Exact, minimizer, runs));
  write_text(out / "timing.json", timing_json(runs));
  return any_aborted(runs) ? kExitNumerical : kExitOk;
}

DiagnosticsReport run_checks(const ExperimentConfig& cfg, std::ostream& log) {
  DiagnosticsReport report;
  const MapPair maps = cfg.maps();
  const DiagnosticsConfig& d = cfg.diagnostics;
  const SystemKind system = cfg.sim.system;

  if (!cfg.omegas_exact.empty() || system == SystemKind::Es) report.add(check_frequencies(cfg.omegas_exact));
  if (d.gradients) report.add(check_gradients(maps, d.gradient_box, d.gradient_points, cfg.seed));

  MinimizerEstimate minimizer;
  {
    CheckResult r;
    r.name = "constrained_minimizer";
    try {
      minimizer = minimizer_for(cfg, maps);
    } catch (const DegenerateInput& e) {
      r.pass = false;
      r.margin = -1.0;
      r.detail = e.what();
      report.add(r);
      log << "aborting checks: " << e.what() << "\n";
      return report;
    }
    r.worst_theta = minimizer.theta_star;
    if (minimizer.on_boundary) {
      r.margin = 1e-2 - minimizer.collinearity_residual;
      r.pass = r.margin >= 0.0;
      r.detail = "boundary minimizer, collinearity residual " + fmt17(minimizer.collinearity_residual);
    } else {
      r.margin = minimizer.h_at_star;
      r.pass = minimizer.h_at_star >= -1e-4;
      r.detail = "interior minimizer, h = " + fmt17(minimizer.h_at_star);
    }
    report.add(r);
  }

  std::optional<double> alpha = d.alpha;
  {
    CheckResult r;
    r.name = "alpha_selection";
    try {
      const AlphaSelection sel = select_alpha(maps, d.rho, GridSpec{d.search_box, d.alpha_counts});
      if (!alpha) alpha = sel.alpha;
      r.margin = sel.alpha * sel.l_estimate - sel.sup_grad_j;
      r.pass = r.margin > 0.0 || sel.sup_grad_j == 0.0;
      r.detail = "alpha " + fmt17(sel.alpha) + ", L " + fmt17(sel.l_estimate) + ", sup |grad J| " +
                 fmt17(sel.sup_grad_j) + " over " + std::to_string(sel.sample_count) + " band samples";
    } catch (const Error& e) {
      r.pass = false;
      r.margin = -1.0;
      r.detail = e.what();
    }
    report.add(r);
  }

  if (d.angle) {
    CheckResult r;
    r.name = "angle_condition";
    try {
      const auto res = check_angle_condition(maps, d.rho, d.r_star, minimizer, GridSpec{d.search_box, d.alpha_counts});
      r.pass = res.below_one;
      r.margin = res.margin;
      r.worst_theta = res.worst_theta;
      r.detail = "f* estimate " + fmt17(res.f_star_estimate) + " over " + std::to_string(res.sample_count) + " samples";
    } catch (const Error& e) {
      r.pass = false;
      r.margin = -1.0;
      r.detail = e.what();
    }
    report.add(r);
  }

  if (system == SystemKind::Es) {
    cfg.es.validate(cfg.dim);
    check_dither_resolution(cfg.resolved_sim(system), cfg.es);
  }
  std::optional<LyapunovRef> lyap;
  if (system == SystemKind::Exact) lyap = LyapunovRef{minimizer.j_star, alpha};
  run_batch_impl(cfg, system, maps, minimizer, lyap, false, [&](std::size_t i, RunResult& run) {
    const std::string suffix = "[" + std::to_string(i) + "]";
    if (run.record.aborted || !run.trajectory) {
      CheckResult r;
      r.name = "run" + suffix;
      r.pass = false;
      r.margin = -1.0;
      r.worst_time = run.record.abort_time;
      r.detail = run.record.error;
      report.add(r);
      return;
    }
    const Trajectory& traj = *run.trajectory;
    std::vector<CheckResult> results;
    if (system == SystemKind::Exact) {
      results.push_back(check_invariance(traj, cfg.es.c, d.invariance_tol));
      if (alpha)
        results.push_back(check_lyapunov_decrease(traj, maps, minimizer, *alpha, d.exclusion_radius, d.lyapunov_tol));
    } else {
      results.push_back(check_practical_safety(traj, cfg.es, default_delta(cfg, traj, maps), default_transient(cfg)));
      if (d.estimator)
        results.push_back(check_estimator_decay(traj, maps, cfg.es, default_transient(cfg), 1.0 / cfg.es.omega_f,
                                                d.estimator_floor, d.estimator_gain));
    }
    for (auto& r : results) {
      r.name += suffix;
      report.add(std::move(r));
    }
    log << "trajectory " << i << " checked\n";
  });
  return report;
}

int cmd_check(const ExperimentConfig& cfg, std::ostream& log) {
  const DiagnosticsReport report = run_checks(cfg, log);
  write_text(fs::path(cfg.output) / "report.json", report.to_json() + "\n");
  for (const auto& c : report.checks)
    log << (c.pass ? "PASS " : "FAIL ") << c.name << " margin=" << fmt17(c.margin) << "\n";
  return report.all_pass() ? kExitOk : kExitCheckFailed;
}

int cmd_paper_example(const std::string& out_dir, std::size_t workers, std::ostream& log) {
  struct Scenario {
    const char* name;
    double c, k;
  };
  const Scenario scenarios[] = {{"a", 1.0, 0.0005}, {"b", 3.0, 0.0005}, {"c", 3.0, 0.0001}};
  const std::vector<double> probe_ic{-2.5, -0.5};

  ordered_json comparison = ordered_json::array();
  bool aborted = false;
  for (const auto& sc : scenarios) {
    ExperimentConfig cfg = ExperimentConfig::two_lobe_example(sc.c, sc.k);
    cfg.workers = workers;
    const MapPair maps = cfg.maps();
    const MinimizerEstimate minimizer = minimizer_for(cfg, maps);
    const fs::path dir = fs::path(out_dir) / (std::string("scenario_") + sc.name);
    fs::create_directories(dir);
    log << "scenario " << sc.name << ": c=" << sc.c << " k=" << sc.k << " t_final=" << cfg.sim.t_final << "\n";

    double tv_sum = 0.0, min_h = std::numeric_limits<double>::infinity();
    double retention_margin = std::numeric_limits<double>::infinity();
    double practical_margin = std::numeric_limits<double>::infinity();
    std::size_t ok_runs = 0;
    auto runs = run_batch_impl(cfg, SystemKind::Es, maps, minimizer, std::nullopt, false,
                               [&](std::size_t i, RunResult& r) {
                                 if (!r.trajectory) return;
                                 const Trajectory& traj = *r.trajectory;
                                 write_trajectory_csv((dir / indexed_name("traj", i)).string(), traj, &cfg.es,
                                                      cfg.csv_stride);
                                 ++ok_runs;
                                 tv_sum += transient_total_variation(traj, 0.1);
                                 min_h = std::min(min_h, r.record.min_h);
                                 retention_margin =
                                     std::min(retention_margin, check_safe_set_retention(traj, 0.0, -0.05).margin);
                                 practical_margin = std::min(practical_margin, r.record.safety_margin);
                               });
    write_text(dir / "summary.json", summary_json("paper-example", SystemKind::Es, minimizer, runs));
    aborted = aborted || any_aborted(runs);

    double dist_sum = 0.0, dist_max = 0.0;
    for (const auto& r : runs) {
      if (r.record.aborted) continue;
      dist_sum += r.record.final_distance;
      dist_max = std::max(dist_max, r.record.final_distance);
    }

    const Trajectory probe = simulate_es(maps, cfg.es, cfg.initial_state(probe_ic), cfg.resolved_sim(SystemKind::Es));
    write_trajectory_csv((dir / "probe.csv").string(), probe, &cfg.es, cfg.csv_stride);

    ordered_json entry;
    entry["scenario"] = sc.name;
    entry["c"] = sc.c;
    entry["k"] = sc.k;
    entry["t_final"] = cfg.resolved_sim(SystemKind::Es).step_count() * cfg.sim.dt;
    entry["runs"] = runs.size();
    entry["mean_final_distance"] = ok_runs ? dist_sum / static_cast<double>(ok_runs) : 0.0;
    entry["max_final_distance"] = dist_max;
    entry["min_h"] = finite_or_null(min_h);
    entry["transient_total_variation"] = ok_runs ? tv_sum / static_cast<double>(ok_runs) : 0.0;
    entry["practical_safety_margin"] = finite_or_null(practical_margin);
    entry["retention_margin"] = finite_or_null(retention_margin);
    entry["probe"] = ordered_json{{"initial_theta_hat", probe_ic},
                                 {"min_h_theta_hat", *std::min_element(probe.h_hat.begin(), probe.h_hat.end())},
                                 {"transient_total_variation", transient_total_variation(probe, 0.1)}};
    comparison.push_back(std::move(entry));
  }
  write_text(fs::path(out_dir) / "comparison.json", comparison.dump(2) + "\n");
  return aborted ? kExitNumerical : kExitOk;
}

}  // namespace safees
