#include "safees/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "safees/error.hpp"

namespace safees {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kRationalLimit = 1'000'000'000;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void require_derived(const Trajectory& traj) {
  if (traj.h_applied.size() != traj.size())
    throw Error("trajectory has no derived columns; call attach_derived first");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Frequencies

Rational Rational::make(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ConfigError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  if (num > kRationalLimit || num < -kRationalLimit || den > kRationalLimit)
    throw ConfigError("rational frequency components must not exceed 1e9");
  return Rational{num, den};
}

Rational Rational::parse(const std::string& raw) {
  const auto first = raw.find_first_not_of(" \t");
  const std::string text = first == std::string::npos ? "" : raw.substr(first, raw.find_last_not_of(" \t") - first + 1);
  auto bad = [&] { return ConfigError("cannot parse frequency '" + text + "' as a rational"); };
  auto parse_int = [&](const std::string& s) -> std::int64_t {
    if (s.empty()) throw bad();
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != s.size()) throw bad();
    return v;
  };
  if (const auto slash = text.find('/'); slash != std::string::npos)
    return make(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  if (const auto dot_pos = text.find('.'); dot_pos != std::string::npos) {
    const std::string whole = text.substr(0, dot_pos);
    const std::string frac = text.substr(dot_pos + 1);
    if (frac.empty() || frac.size() > 9 || frac.find_first_not_of("0123456789") != std::string::npos)
      throw bad();
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    const bool negative = !whole.empty() && whole[0] == '-';
    const std::int64_t w = whole.empty() || whole == "-" ? 0 : parse_int(whole);
    const std::int64_t f = parse_int(frac);
    const std::int64_t mag = (w < 0 ? -w : w) * den + f;
    return make(negative ? -mag : mag, den);
  }
  return make(parse_int(text), 1);
}

std::string FrequencyViolation::describe() const {
  const auto w = [](std::size_t idx) { return "omega_" + std::to_string(idx + 1); };
  if (kind == Kind::Equal) return w(i) + " = " + w(j);
  return w(i) + " + " + w(j) + " = " + w(k);
}

FrequencyVerdict validate_frequencies(std::span<const Rational> omegas) {
  using Wide = __int128;
  FrequencyVerdict verdict;
  const std::size_t n = omegas.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (omegas[i] == omegas[j])
        verdict.violations.push_back({FrequencyViolation::Kind::Equal, i, j, 0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const Rational& a = omegas[i];
        const Rational& b = omegas[j];
        const Rational& c = omegas[k];
        const Wide lhs = (static_cast<Wide>(a.num) * b.den + static_cast<Wide>(b.num) * a.den) * c.den;
        const Wide rhs = static_cast<Wide>(c.num) * a.den * b.den;
        if (lhs == rhs) verdict.violations.push_back({FrequencyViolation::Kind::SumEquals, i, j, k});
      }
    }
  }
  verdict.ok = verdict.violations.empty();
  return verdict;
}

CheckResult check_frequencies(std::span<const Rational> omegas) {
  const FrequencyVerdict v = validate_frequencies(omegas);
  CheckResult r;
  r.name = "frequencies";
  r.pass = v.ok;
  r.margin = v.ok ? 0.0 : -static_cast<double>(v.violations.size());
  for (const auto& viol : v.violations) {
    if (!r.detail.empty()) r.detail += "; ";
    r.detail += viol.describe();
  }
  if (v.ok) r.detail = "distinct, no pairwise sum equals a third frequency";
  return r;
}

// ---------------------------------------------------------------------------
// Grids

std::size_t GridSpec::total() const {
  std::size_t t = 1;
  for (std::size_t c : counts) t *= c;
  return t;
}

void GridSpec::validate(std::size_t n) const {
  if (box.lower.size() != n || box.upper.size() != n || counts.size() != n)
    throw ConfigError("grid dimensions do not match the parameter dimension");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(box.lower[i] <= box.upper[i])) throw ConfigError("grid lower bound exceeds upper bound");
    if (counts[i] == 0) throw ConfigError("grid counts must be at least 1");
  }
}

std::vector<double> grid_axis(double lower, double upper, std::size_t count) {
  if (count == 1) return {0.5 * (lower + upper)};
  std::vector<double> axis(count);
  for (std::size_t i = 0; i < count; ++i)
    axis[i] = lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(count - 1);
  return axis;
}

void for_each_grid_point(const GridSpec& grid, const std::function<void(std::span<const double>)>& fn) {
  const std::size_t n = grid.counts.size();
  grid.validate(n);
  std::vector<std::vector<double>> axes(n);
  for (std::size_t i = 0; i < n; ++i) axes[i] = grid_axis(grid.box.lower[i], grid.box.upper[i], grid.counts[i]);
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> point(n);
  // First axis varies slowest.
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) point[i] = axes[i][idx[i]];
    fn(point);
    std::size_t d = n;
    while (d > 0) {
      --d;
      if (++idx[d] < grid.counts[d]) break;
      idx[d] = 0;
      if (d == 0) return;
    }
    if (n == 0) return;
  }
}

// ---------------------------------------------------------------------------
// Constrained minimizer oracle

MinimizerEstimate find_constrained_minimizer(const MapPair& maps, const Box& box, std::size_t coarse,
                                             std::size_t refine_iters) {
  const std::size_t n = maps.dim();
  if (coarse == 0) throw ConfigError("coarse grid resolution must be at least 1");
  GridSpec grid{box, std::vector<std::size_t>(n, coarse)};
  grid.validate(n);
  if (static_cast<double>(grid.total()) > 2e7) throw ConfigError("coarse minimizer grid is too large");

  std::vector<double> best;
  double best_j = kInf;
  auto consider = [&](std::span<const double> p) {
    if (!(maps.h.eval(p) >= 0.0)) return;
    const double j = maps.j.eval(p);
    if (j < best_j) {
      best_j = j;
      best.assign(p.begin(), p.end());
    }
  };
  for_each_grid_point(grid, consider);
  if (best.empty()) throw DegenerateInput("no feasible samples (h >= 0) in the search box; the safe set appears empty");

  MinimizerEstimate est;
  est.round_values.push_back(best_j);

  std::vector<double> spacing(n);
  for (std::size_t i = 0; i < n; ++i)
    spacing[i] = coarse > 1 ? (box.upper[i] - box.lower[i]) / static_cast<double>(coarse - 1)
                            : (box.upper[i] - box.lower[i]);

  // Each round samples +-2 previous spacings with 21 nodes per axis, so the
  // new spacing is the old one divided by 5.
  constexpr std::size_t kLocal = 21;
  for (std::size_t round = 0; round < refine_iters; ++round) {
    GridSpec local;
    local.counts.assign(n, kLocal);
    local.box.lower.resize(n);
    local.box.upper.resize(n);
    const std::vector<double> center = best;
    for (std::size_t i = 0; i < n; ++i) {
      local.box.lower[i] = center[i] - 2.0 * spacing[i];
      local.box.upper[i] = center[i] + 2.0 * spacing[i];
      spacing[i] /= 5.0;
    }
    for_each_grid_point(local, consider);
    est.round_values.push_back(best_j);
  }

  est.theta_star = best;
  est.j_star = best_j;
  est.h_at_star = maps.h.eval(best);
  est.on_boundary = std::abs(est.h_at_star) <= 1e-4;
  const auto gj = maps.j.grad(best);
  const auto gh = maps.h.grad(best);
  const double nj = norm(gj);
  const double nh = norm(gh);
  est.collinearity_residual = (nj > 0.0 && nh > 0.0) ? 1.0 - std::abs(dot(gj, gh)) / (nj * nh) : 0.0;
  return est;
}

// ---------------------------------------------------------------------------
// Lyapunov functions and alpha

double lyapunov_v1(std::span<const double> theta, const MapPair& maps, const MinimizerEstimate& m) {
  return maps.j.eval(theta) - m.j_star;
}

double lyapunov_v_from_values(double j, double h, double j_star, double alpha) noexcept {
  return std::max(-alpha * h, 0.0) + std::max(j - j_star, 0.0);
}

double lyapunov_v(std::span<const double> theta, const MapPair& maps, const MinimizerEstimate& m,
                  double alpha) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  return lyapunov_v_from_values(maps.j.eval(theta), maps.h.eval(theta), m.j_star, alpha);
}

AlphaSelection select_alpha(const MapPair& maps, double rho, const GridSpec& grid) {
  const std::size_t n = maps.dim();
  grid.validate(n);
  if (rho > 0.0) throw ConfigError("rho must be nonpositive");
  AlphaSelection sel;
  sel.rho = rho;
  double min_grad_h = kInf;
  double max_grad_j = 0.0;
  std::vector<double> gj(n), gh(n);
  for_each_grid_point(grid, [&](std::span<const double> p) {
    const double h = maps.h.value_and_grad(p, gh);
    if (!(h >= rho)) return;
    maps.j.value_and_grad(p, gj);
    max_grad_j = std::max(max_grad_j, norm(gj));
    if (h <= 0.0) {
      min_grad_h = std::min(min_grad_h, norm(gh));
      ++sel.sample_count;
    }
  });
  if (sel.sample_count == 0)
    throw DegenerateInput("no grid samples satisfy rho <= h <= 0; choose another rho or a finer grid");
  sel.l_estimate = min_grad_h;
  sel.sup_grad_j = max_grad_j;
  if (sel.l_estimate < 1e-8)
    throw AssumptionViolation("min |grad h| on the band rho <= h <= 0 is " + fmt(sel.l_estimate) +
                              "; the barrier gradient is not bounded away from zero");
  sel.alpha = sel.sup_grad_j > 0.0 ? 1.1 * sel.sup_grad_j / sel.l_estimate : 1.0;
  return sel;
}

double alpha_case_b(double sup_grad_j_omega, double l_estimate, double c, double rho, double f_star) {
  if (!(l_estimate > 0.0)) throw Error("L must be positive");
  const double f_tilde = 1.0 - f_star * f_star;
  if (!(f_tilde > 0.0)) throw AssumptionViolation("angle bound f* must be below 1");
  return 1.1 * std::max(sup_grad_j_omega / l_estimate, c * std::abs(rho) / (l_estimate * l_estimate * f_tilde));
}

AngleConditionResult check_angle_condition(const MapPair& maps, double rho, double r_star,
                                           const MinimizerEstimate& minimizer, const GridSpec& grid) {
  const std::size_t n = maps.dim();
  grid.validate(n);
  AngleConditionResult res;
  res.f_star_estimate = -kInf;
  std::vector<double> gj(n), gh(n);
  for_each_grid_point(grid, [&](std::span<const double> p) {
    const double h = maps.h.value_and_grad(p, gh);
    if (!(h >= rho && h <= 0.0)) return;
    if (distance(p, minimizer.theta_star) < r_star) return;
    maps.j.value_and_grad(p, gj);
    const double nj = norm(gj);
    const double nh = norm(gh);
    if (nj == 0.0 || nh == 0.0) return;
    ++res.sample_count;
    const double f = dot(gj, gh) / (nj * nh);
    if (f > res.f_star_estimate) {
      res.f_star_estimate = f;
      res.worst_theta.assign(p.begin(), p.end());
    }
  });
  if (res.sample_count == 0)
    throw DegenerateInput("no grid samples in {rho <= h <= 0} outside the r* ball");
  res.margin = 1.0 - res.f_star_estimate;
  res.below_one = res.f_star_estimate < 1.0;
  return res;
}

// ---------------------------------------------------------------------------
// Report

void DiagnosticsReport::add(CheckResult result) {
  for (auto& c : checks) {
    if (c.name == result.name) {
      c = std::move(result);
      return;
    }
  }
  checks.push_back(std::move(result));
}

const CheckResult* DiagnosticsReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

bool DiagnosticsReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

std::string DiagnosticsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["pass"] = all_pass();
  doc["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json item;
    item["name"] = c.name;
    item["pass"] = c.pass;
    item["margin"] = std::isfinite(c.margin) ? nlohmann::ordered_json(c.margin) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json loc = nlohmann::ordered_json::object();
    if (c.worst_time) loc["t"] = *c.worst_time;
    if (!c.worst_theta.empty()) loc["theta"] = c.worst_theta;
    item["worst_location"] = loc.empty() ? nlohmann::ordered_json(nullptr) : loc;
    if (!c.detail.empty()) item["detail"] = c.detail;
    doc["checks"].push_back(std::move(item));
  }
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Checks

CheckResult check_gradients(const MapPair& maps, const Box& box, std::size_t count, std::uint64_t seed,
                            double step, double rel_tol) {
  const std::size_t n = maps.dim();
  if (box.lower.size() != n || box.upper.size() != n) throw ConfigError("gradient-check box has wrong dimension");
  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dists;
  for (std::size_t i = 0; i < n; ++i) dists.emplace_back(box.lower[i], box.upper[i]);

  CheckResult r;
  r.name = "gradient_cross_check";
  r.margin = kInf;
  std::vector<double> p(n);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t i = 0; i < n; ++i) p[i] = dists[i](rng);
    for (const Expr* e : {&maps.j, &maps.h}) {
      const auto g = e->grad(p);
      const auto fd = e->fd_grad(p, step);
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff += (g[i] - fd[i]) * (g[i] - fd[i]);
      const double margin = rel_tol * (1.0 + norm(g)) - std::sqrt(diff);
      if (margin < r.margin) {
        r.margin = margin;
        r.worst_theta = p;
        r.detail = e == &maps.j ? "worst on J" : "worst on h";
      }
    }
  }
  r.pass = count == 0 || r.margin >= 0.0;
  return r;
}

CheckResult check_invariance(const Trajectory& traj, double c, double tol) {
  if (traj.system != SystemKind::Exact) throw Error("invariance check expects an EXACT trajectory");
  require_derived(traj);
  if (traj.size() < 2) throw DegenerateInput("trajectory too short for invariance check (<2 samples)");
  CheckResult r;
  r.name = "forward_invariance";
  r.margin = kInf;
  const auto& h = traj.h_applied;
  const double t0 = traj.times[0];
  double worst_rate = kInf, worst_decay = kInf;
  std::size_t rate_at = 0, decay_at = 0;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double dt = traj.times[i + 1] - traj.times[i];
    const double rate = (h[i + 1] - h[i]) / dt + c * 0.5 * (h[i] + h[i + 1]);
    const double m = rate + tol;
    if (m < worst_rate) {
      worst_rate = m;
      rate_at = i;
    }
  }
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double bound = h[0] * std::exp(-c * (traj.times[i] - t0)) - tol;
    const double m = h[i] - bound;
    if (m < worst_decay) {
      worst_decay = m;
      decay_at = i;
    }
  }
  const bool rate_worse = worst_rate < worst_decay;
  r.margin = std::min(worst_rate, worst_decay);
  r.pass = r.margin >= 0.0;
  const std::size_t at = rate_worse ? rate_at : decay_at;
  r.worst_time = traj.times[at];
  r.worst_theta.assign(traj.theta_hat(at).begin(), traj.theta_hat(at).end());
  r.detail = "rate margin " + fmt(worst_rate) + ", exponential-bound margin " + fmt(worst_decay);
  return r;
}

CheckResult check_lyapunov_decrease(const Trajectory& traj, const MapPair& maps,
                                    const MinimizerEstimate& minimizer, double alpha,
                                    double exclusion_radius, double tol) {
  if (traj.system != SystemKind::Exact) throw Error("Lyapunov check expects an EXACT trajectory");
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  CheckResult r;
  r.name = "lyapunov_decrease";
  const std::size_t m = traj.size();
  std::vector<double> v(m), dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto th = traj.theta_hat(i);
    v[i] = lyapunov_v(th, maps, minimizer, alpha);
    dist[i] = distance(th, minimizer.theta_star);
  }
  double weak = kInf, strict = kInf;
  std::size_t weak_at = 0, strict_at = 0;
  std::size_t strict_intervals = 0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double d = std::min(dist[i], dist[i + 1]);
    if (d <= exclusion_radius) continue;
    const double dv = v[i + 1] - v[i];
    if (tol - dv < weak) {
      weak = tol - dv;
      weak_at = i;
    }
    if (d > 2.0 * exclusion_radius) {
      ++strict_intervals;
      if (-dv < strict) {
        strict = -dv;
        strict_at = i;
      }
    }
  }
  r.pass = weak >= 0.0 && strict > 0.0;
  r.margin = m < 2 ? kInf : std::min(weak, strict);
  if (std::isfinite(r.margin)) {
    const std::size_t at = (weak < 0.0 || strict_intervals == 0 || weak <= strict) ? weak_at : strict_at;
    r.worst_time = traj.times[at];
    r.worst_theta.assign(traj.theta_hat(at).begin(), traj.theta_hat(at).end());
  }
  r.detail = "nonincrease margin " + fmt(weak) + ", strict-decrease margin " + fmt(strict) + " over " +
             std::to_string(strict_intervals) + " intervals";
  return r;
}

CheckResult check_practical_safety(const Trajectory& traj, const EsConfig& cfg, double delta,
                                   double transient) {
  if (traj.system != SystemKind::Es) throw Error("practical-safety check expects an ES trajectory");
  require_derived(traj);
  CheckResult r;
  r.name = "practical_safety";
  r.margin = kInf;
  if (traj.size() == 0) throw DegenerateInput("empty trajectory");
  const double t0 = traj.times[0];
  const double h0 = traj.h_applied[0];
  const double rate = cfg.c * cfg.k * cfg.omega_f;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.times[i];
    if (t < transient) continue;
    const double m = traj.h_applied[i] - (h0 * std::exp(-rate * (t - t0)) - delta);
    if (m < r.margin) {
      r.margin = m;
      r.worst_time = t;
      r.worst_theta = traj.applied(i, &cfg);
    }
  }
  r.pass = !(r.margin < 0.0);
  r.detail = "delta " + fmt(delta) + ", transient " + fmt(transient);
  return r;
}

CheckResult check_safe_set_retention(const Trajectory& traj, double enter_level, double floor) {
  require_derived(traj);
  CheckResult r;
  r.name = "safe_set_retention";
  r.margin = kInf;
  bool entered = false;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double h = traj.h_hat[i];
    if (!entered && h >= enter_level) entered = true;
    if (entered && h - floor < r.margin) {
      r.margin = h - floor;
      r.worst_time = traj.times[i];
      r.worst_theta.assign(traj.theta_hat(i).begin(), traj.theta_hat(i).end());
    }
  }
  r.pass = !(r.margin < 0.0);
  r.detail = entered ? "entered at level " + fmt(enter_level) : "never reached level " + fmt(enter_level);
  return r;
}

std::vector<double> estimator_error(const EsState& state, const MapPair& maps) {
  const std::size_t n = maps.dim();
  if (state.n() != n) throw Error("ES state dimension does not match maps");
  std::vector<double> gj(n), gh(n);
  const double j = maps.j.value_and_grad(state.theta_hat, gj);
  const double h = maps.h.value_and_grad(state.theta_hat, gh);
  std::vector<double> e(2 * n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = state.g_j[i] - gj[i];
    e[n + 1 + i] = state.g_h[i] - gh[i];
  }
  e[n] = state.eta_j - j;
  e[2 * n + 1] = state.eta_h - h;
  return e;
}

CheckResult check_estimator_decay(const Trajectory& traj, const MapPair& maps, const EsConfig& cfg,
                                  double settle_time, double early_time, double floor_min,
                                  double floor_gain) {
  if (traj.system != SystemKind::Es) throw Error("estimator check expects an ES trajectory");
  const std::size_t n = maps.dim();
  const std::size_t m = traj.size();
  std::vector<double> err(m);
  double g_max = 0.0;
  std::vector<double> gj(n), gh(n);
  for (std::size_t i = 0; i < m; ++i) {
    const EsState s = EsState::unpack(traj.state(i), n);
    err[i] = norm(estimator_error(s, maps));
    maps.j.value_and_grad(s.theta_hat, gj);
    maps.h.value_and_grad(s.theta_hat, gh);
    g_max = std::max(g_max, std::sqrt(dot(gj, gj) + dot(gh, gh)));
  }
  const double floor = std::max(floor_min, floor_gain * cfg.a * g_max);
  double late_max = 0.0, early_max = 0.0;
  std::size_t late_at = 0;
  bool any_late = false, any_early = false;
  for (std::size_t i = 0; i < m; ++i) {
    const double t = traj.times[i];
    if (t >= settle_time) {
      any_late = true;
      if (err[i] > late_max) {
        late_max = err[i];
        late_at = i;
      }
    }
    if (t < early_time) {
      any_early = true;
      early_max = std::max(early_max, err[i]);
    }
  }
  CheckResult r;
  r.name = "estimator_decay";
  const double settled = floor - late_max;
  const double decayed = early_max - floor;
  r.margin = std::min(settled, decayed);
  r.pass = any_late && any_early && settled >= 0.0 && decayed > 0.0;
  r.worst_time = traj.times[late_at];
  r.worst_theta.assign(traj.theta_hat(late_at).begin(), traj.theta_hat(late_at).end());
  r.detail = "floor " + fmt(floor) + ", settled max |e| " + fmt(late_max) + ", early max |e| " + fmt(early_max);
  return r;
}

double transient_total_variation(const Trajectory& traj, double fraction) {
  if (traj.size() < 2) return 0.0;
  const double t_end = traj.times.front() + fraction * (traj.times.back() - traj.times.front());
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < traj.size() && traj.times[i + 1] <= t_end; ++i)
    tv += distance(traj.theta_hat(i), traj.theta_hat(i + 1));
  return tv;
}

}  // namespace safees
