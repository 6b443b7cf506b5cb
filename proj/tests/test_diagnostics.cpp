#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <json.hpp>

#include "safees/diagnostics.hpp"
#include "safees/error.hpp"
#include "safees/integrator.hpp"

using namespace safees;

namespace {

MapPair two_lobe() {
  return MapPair::parse("(x1 + 3)^2 + x2^2", "exp(-(x1 - 1)^2 - x2^2) + exp(-(x1 + 1)^2 - x2^2) - 0.5", 2);
}

const Box kBox{{-4, -4}, {4, 4}};

const MinimizerEstimate& two_lobe_minimizer() {
  static const MinimizerEstimate m = find_constrained_minimizer(two_lobe(), kBox, 400, 6);
  return m;
}

std::vector<Rational> rationals(std::initializer_list<std::int64_t> v) {
  std::vector<Rational> out;
  for (auto x : v) out.push_back(Rational::make(x));
  return out;
}

SimSpec exact_spec(double t_final, std::size_t stride = 10) {
  SimSpec s;
  s.dt = 1e-3;
  s.t_final = t_final;
  s.sample_stride = stride;
  s.system = SystemKind::Exact;
  return s;
}

}  // namespace

TEST_CASE("rational parsing") {
  CHECK(Rational::parse("13") == Rational::make(13));
  CHECK(Rational::parse("7/2") == Rational::make(7, 2));
  CHECK(Rational::parse("12.5") == Rational::make(25, 2));
  CHECK(Rational::parse("-4/6") == Rational::make(-2, 3));
  CHECK(Rational::make(3, -6) == Rational::make(-1, 2));
  CHECK(Rational::parse(" 10 ").value() == 10.0);
  CHECK_THROWS_AS(Rational::make(1, 0), ConfigError);
  for (const char* bad : {"", "x", "1/0", "1/", "/2", "1.2.3", "1e3", "2/3/4"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(Rational::parse(bad), ConfigError);
  }
}

TEST_CASE("frequency separation") {
  CHECK(validate_frequencies(rationals({10, 13})).ok);
  const auto eq = validate_frequencies(rationals({10, 10}));
  REQUIRE_FALSE(eq.ok);
  CHECK(eq.violations[0].kind == FrequencyViolation::Kind::Equal);
  CHECK(eq.violations[0].i == 0);
  CHECK(eq.violations[0].j == 1);
  const auto sum = validate_frequencies(rationals({3, 5, 8}));
  REQUIRE_FALSE(sum.ok);
  CHECK(sum.violations.size() == 1);
  CHECK(sum.violations[0].kind == FrequencyViolation::Kind::SumEquals);
  CHECK(sum.violations[0].k == 2);
  CHECK(!sum.violations[0].describe().empty());
  CHECK(!validate_frequencies(std::vector<Rational>{Rational::make(7, 2), Rational::make(3, 2), Rational::make(5)}).ok);
  CHECK(validate_frequencies(std::vector<Rational>{Rational::make(7, 2), Rational::make(3, 2), Rational::make(51, 10)}).ok);
  CHECK(validate_frequencies(rationals({5})).ok);
  CHECK(validate_frequencies(rationals({2, 4})).ok);  // needs three distinct indices
  CHECK(check_frequencies(rationals({10, 13})).pass);
  CHECK_FALSE(check_frequencies(rationals({10, 10})).pass);
}

TEST_CASE("frequency verdict is permutation invariant and scale covariant") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> d(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Rational> w;
    const int m = 2 + trial % 3;
    for (int i = 0; i < m; ++i) w.push_back(Rational::make(d(rng), 1 + d(rng) % 3));
    const bool ok = validate_frequencies(w).ok;
    std::vector<Rational> p = w;
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(validate_frequencies(p).ok == ok);
    const Rational s = Rational::make(d(rng), d(rng));
    for (auto& x : p) x = Rational::make(x.num * s.num, x.den * s.den);
    CHECK(validate_frequencies(p).ok == ok);
  }
}

TEST_CASE("grids") {
  CHECK(grid_axis(-1, 1, 3) == std::vector<double>{-1, 0, 1});
  CHECK(grid_axis(2, 4, 1) == std::vector<double>{3});
  const GridSpec g{Box{{0, 0}, {1, 2}}, {2, 3}};
  CHECK(g.total() == 6);
  std::vector<std::vector<double>> pts;
  for_each_grid_point(g, [&](std::span<const double> p) { pts.emplace_back(p.begin(), p.end()); });
  REQUIRE(pts.size() == 6);
  CHECK(pts[0] == std::vector<double>{0, 0});
  CHECK(pts[1] == std::vector<double>{0, 1});
  CHECK(pts[3] == std::vector<double>{1, 0});
  CHECK_THROWS_AS(GridSpec(Box{{0}, {1}}, {0}).validate(1), ConfigError);
  CHECK_THROWS_AS(GridSpec(Box{{1}, {0}}, {2}).validate(1), ConfigError);
}

TEST_CASE("constrained minimizer oracle") {
  const MapPair bowl = MapPair::parse("x1^2 + x2^2", "1 - x1^2 - x2^2", 2);
  const auto interior = find_constrained_minimizer(bowl, Box{{-2, -2}, {2, 2}}, 41, 4);
  CHECK(std::abs(interior.theta_star[0]) < 1e-12);
  CHECK(std::abs(interior.theta_star[1]) < 1e-12);
  CHECK_FALSE(interior.on_boundary);

  const MapPair linear = MapPair::parse("x1", "1 - x1^2 - x2^2", 2);
  const auto edge = find_constrained_minimizer(linear, Box{{-2, -2}, {2, 2}}, 101, 6);
  CHECK(std::abs(edge.theta_star[0] + 1) < 1e-4);
  CHECK(std::abs(edge.theta_star[1]) < 1e-2);
  CHECK(edge.on_boundary);

  const auto& m = two_lobe_minimizer();
  CHECK(m.on_boundary);
  CHECK(std::abs(m.h_at_star) <= 1e-4);
  CHECK(m.collinearity_residual <= 1e-2);
  CHECK(m.theta_star[0] < -1.0);
  CHECK(std::abs(m.theta_star[1]) < 1e-3);
  CHECK(m.j_star > 0.0);
  for (std::size_t i = 1; i < m.round_values.size(); ++i) CHECK(m.round_values[i] <= m.round_values[i - 1]);

  // Cross-check against long exact-flow integrations from several safe starts.
  for (const std::vector<double>& start : {std::vector<double>{-1.0, 0.0}, {-0.5, 0.4}, {-1.5, -0.3}}) {
    const auto tr = simulate_exact(two_lobe(), 1.0, 1e4, start, exact_spec(50.0, 1000));
    const auto end = tr.theta_hat(tr.size() - 1);
    CHECK(std::hypot(end[0] - m.theta_star[0], end[1] - m.theta_star[1]) < 1e-3);
  }

  const MapPair empty = MapPair::parse("x1", "-1", 2);
  CHECK_THROWS_AS(find_constrained_minimizer(empty, kBox, 50, 2), DegenerateInput);
}

TEST_CASE("Lyapunov functions") {
  const MapPair maps = two_lobe();
  const auto& m = two_lobe_minimizer();
  CHECK(lyapunov_v1(m.theta_star, maps, m) == 0.0);
  CHECK(lyapunov_v1(std::vector<double>{0, 0}, maps, m) == doctest::Approx(9.0 - m.j_star));
  CHECK(lyapunov_v(m.theta_star, maps, m, 2.0) == doctest::Approx(std::max(-2.0 * m.h_at_star, 0.0)));
  const std::vector<double> safe{0.0, 0.0}, unsafe{-3.0, 0.0};
  CHECK(lyapunov_v(safe, maps, m, 2.0) == doctest::Approx(9.0 - m.j_star));
  CHECK(lyapunov_v(unsafe, maps, m, 2.0) == doctest::Approx(-2.0 * maps.h.eval(unsafe)));
  CHECK_THROWS(lyapunov_v(safe, maps, m, 0.0));

  // V1 >= 0 on C and V >= 0 everywhere; V vanishes only near theta* on C.
  const GridSpec g{kBox, {81, 81}};
  for_each_grid_point(g, [&](std::span<const double> p) {
    const double h = maps.h.eval(p), v = lyapunov_v(p, maps, m, 3.0);
    CHECK(v >= 0.0);
    if (h >= 0) {
      CHECK(lyapunov_v1(p, maps, m) >= -1e-9);
      if (v == 0.0) CHECK(std::hypot(p[0] - m.theta_star[0], p[1] - m.theta_star[1]) < 0.2);
    }
    if (v == 0.0) CHECK((h >= 0.0 && maps.j.eval(p) <= m.j_star));
  });
}

TEST_CASE("alpha selection") {
  const MapPair maps = two_lobe();
  const auto sel = select_alpha(maps, -0.25, GridSpec{kBox, {400, 400}});
  CHECK(std::isfinite(sel.alpha));
  CHECK(sel.l_estimate > 0.0);
  CHECK(sel.alpha * sel.l_estimate > sel.sup_grad_j);
  CHECK(sel.sample_count > 0);

  const MapPair lin = MapPair::parse("x1^2 + x2^2", "x1", 2);
  for (std::size_t n : {7, 40, 123}) {
    const auto s = select_alpha(lin, -0.5, GridSpec{Box{{-1, -1}, {1, 1}}, {n, n}});
    CHECK(s.l_estimate == 1.0);
    CHECK(s.alpha * s.l_estimate > s.sup_grad_j);
  }

  const MapPair flat = MapPair::parse("2", "x1", 2);
  const auto s0 = select_alpha(flat, -0.5, GridSpec{Box{{-1, -1}, {1, 1}}, {11, 11}});
  CHECK(s0.sup_grad_j == 0.0);
  CHECK(s0.alpha == 1.0);

  CHECK_THROWS_AS(select_alpha(MapPair::parse("x1", "1", 2), -0.5, GridSpec{kBox, {11, 11}}), DegenerateInput);
  CHECK_THROWS_AS(select_alpha(MapPair::parse("x1", "-(x1^2 + x2^2)", 2), -0.5, GridSpec{kBox, {11, 11}}),
                  AssumptionViolation);
  CHECK(alpha_case_b(2.0, 1.0, 1.0, -0.25, 0.5) == doctest::Approx(2.2));
  CHECK_THROWS_AS(alpha_case_b(2.0, 1.0, 1.0, -0.25, 1.0), AssumptionViolation);
}

TEST_CASE("angle condition") {
  const auto res = check_angle_condition(two_lobe(), -0.25, 0.5, two_lobe_minimizer(), GridSpec{kBox, {400, 400}});
  CHECK(res.f_star_estimate < 1.0);
  CHECK(res.below_one);
  CHECK(res.margin == doctest::Approx(1.0 - res.f_star_estimate));

  MinimizerEstimate m;
  m.theta_star = {0.5, 0.0};
  const MapPair quad = MapPair::parse("x1^2 + x2^2", "x1 - 0.5", 2);
  const auto q = check_angle_condition(quad, -0.5, 0.3, m, GridSpec{Box{{-2, 0.5}, {2, 2}}, {101, 101}});
  CHECK(q.f_star_estimate <= 0.5 / std::sqrt(0.5) + 1e-12);

  MinimizerEstimate o;
  o.theta_star = {0.0, 5.0};
  const MapPair perp = MapPair::parse("x1^2", "x2", 2);
  const auto p = check_angle_condition(perp, -1.0, 0.1, o, GridSpec{Box{{-2, -1}, {2, 0}}, {41, 41}});
  CHECK(p.f_star_estimate <= 0.0);
}

TEST_CASE("gradient cross-check") {
  const auto r = check_gradients(two_lobe(), kBox, 100, 1);
  CHECK(r.pass);
  CHECK(r.margin >= 0.0);
  CHECK(r.name == "gradient_cross_check");
}

TEST_CASE("forward invariance") {
  const MapPair maps = two_lobe();
  for (const std::vector<double>& start : {std::vector<double>{-1.0, 0.0}, {-3.0, 1.0}, {2.5, -1.5}}) {
    const auto tr = simulate_exact(maps, 1.0, 1e4, start, exact_spec(20.0));
    const auto r = check_invariance(tr, 1.0, 1e-3);
    CHECK(r.pass);
    // Verdict is monotone in tol.
    for (double tol : {1e-6, 1e-4, 1e-3, 1e-1}) {
      const bool p_small = check_invariance(tr, 1.0, tol).pass;
      if (p_small) CHECK(check_invariance(tr, 1.0, tol * 10).pass);
    }
    if (tr.h_hat.front() >= 0)
      for (double h : tr.h_hat) CHECK(h >= -1e-3);
  }
  Trajectory rest;
  rest.system = SystemKind::Exact;
  rest.n = 2;
  rest.state_dim = 2;
  for (int i = 0; i < 5; ++i) {
    rest.times.push_back(i);
    rest.states.insert(rest.states.end(), {1.0, 0.0});
  }
  attach_derived(rest, maps, nullptr, std::nullopt);
  CHECK(check_invariance(rest, 1.0, 1e-3).pass);

  // A trajectory that leaves the safe set faster than allowed fails.
  const MapPair line = MapPair::parse("x1", "1 - x1", 1);
  Trajectory fast;
  fast.system = SystemKind::Exact;
  fast.n = 1;
  fast.state_dim = 1;
  for (int i = 0; i <= 10; ++i) {
    fast.times.push_back(0.1 * i);
    fast.states.push_back(0.3 * i);
  }
  attach_derived(fast, line, nullptr, std::nullopt);
  const auto bad = check_invariance(fast, 1.0, 1e-3);
  CHECK_FALSE(bad.pass);
  CHECK(bad.margin < 0);
  CHECK(bad.worst_time.has_value());
}

TEST_CASE("Lyapunov decrease") {
  const MapPair maps = two_lobe();
  const auto& m = two_lobe_minimizer();
  const double alpha = select_alpha(maps, -0.25, GridSpec{kBox, {400, 400}}).alpha;
  const auto tr = simulate_exact(maps, 1.0, 1e4, std::vector<double>{-2.5, -0.5}, exact_spec(50.0), LyapunovRef{m.j_star, alpha});
  CHECK(check_lyapunov_decrease(tr, maps, m, alpha, 0.05, 1e-6).pass);

  const auto still = simulate_exact(maps, 1.0, 1e4, m.theta_star, exact_spec(5.0), LyapunovRef{m.j_star, alpha});
  CHECK(check_lyapunov_decrease(still, maps, m, alpha, 0.05, 1e-6).pass);
  for (std::size_t i = 0; i < still.size(); ++i)
    CHECK(std::hypot(still.theta_hat(i)[0] - m.theta_star[0], still.theta_hat(i)[1] - m.theta_star[1]) < 1e-3);

  // Unfiltered gradient flow from the safe interior: V equals V1 and decreases.
  const MapPair wide = MapPair::parse("(x1 - 1)^2 + x2^2", "100 - x1^2 - x2^2", 2);
  MinimizerEstimate wm;
  wm.theta_star = {1.0, 0.0};
  wm.j_star = 0.0;
  const auto g = simulate_exact(wide, 1e-3, 1e4, std::vector<double>{-2.0, 2.0}, exact_spec(3.0), LyapunovRef{0.0, 1.0});
  CHECK(check_lyapunov_decrease(g, wide, wm, 1.0, 0.05, 1e-9).pass);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.v[i] == doctest::Approx(g.v1[i]));
}

TEST_CASE("practical safety and retention") {
  // Interior minimizer of a disk-shaped safe set: h rises along the run.
  const MapPair maps = MapPair::parse("x1^2 + x2^2", "4 - x1^2 - x2^2", 2);
  const EsConfig cfg{0.05, 1.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
  EsState x0 = EsState::zeros(2);
  x0.theta_hat = {1.0, 0.5};
  SimSpec s;
  s.dt = default_es_dt(cfg);
  s.t_final = 60.0;
  s.sample_stride = 10;
  const auto tr = simulate_es(maps, cfg, x0, s);
  CHECK(check_practical_safety(tr, cfg, std::numeric_limits<double>::infinity(), 0.5).pass);
  CHECK(check_practical_safety(tr, cfg, 0.0, 0.5).pass);
  const double m1 = check_practical_safety(tr, cfg, 0.01, 0.5).margin;
  const double m2 = check_practical_safety(tr, cfg, 0.05, 0.5).margin;
  CHECK(m2 == doctest::Approx(m1 + 0.04));
  CHECK(check_safe_set_retention(tr, 0.05, -0.02).pass);
  CHECK(check_safe_set_retention(tr, 10.0, 100.0).pass);  // never enters: vacuous

  // Approaching the barrier from inside: the dither dips below the exponential bound.
  const MapPair lobe = MapPair::parse("(x1 + 3)^2 + x2^2", "exp(-(x1 - 1)^2 - x2^2) + exp(-(x1 + 1)^2 - x2^2) - 0.5", 2);
  const EsConfig fast{0.0005, 3.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
  x0.theta_hat = {-0.5, 0.2};
  s.dt = default_es_dt(fast);
  s.t_final = 300.0;
  const auto near = simulate_es(lobe, fast, x0, s);
  const auto tight = check_practical_safety(near, fast, 0.0, 0.5);
  CHECK_FALSE(tight.pass);
  CHECK(tight.worst_time.has_value());
  CHECK(check_practical_safety(near, fast, 0.2, 0.5).pass);
}

TEST_CASE("estimator error") {
  const MapPair maps = two_lobe();
  EsState z = EsState::zeros(2);
  const auto e0 = estimator_error(z, maps);
  const double h00 = 2 * std::exp(-1.0) - 0.5;
  REQUIRE(e0.size() == 6);
  CHECK(e0[0] == -6.0);
  CHECK(e0[1] == 0.0);
  CHECK(e0[2] == -9.0);
  CHECK(std::abs(e0[3]) < 1e-15);
  CHECK(std::abs(e0[5] + h00) < 1e-15);

  EsState x = EsState::zeros(2);
  x.theta_hat = {-1.3, 0.7};
  x.eta_j = maps.j.value_and_grad(x.theta_hat, x.g_j);
  x.eta_h = maps.h.value_and_grad(x.theta_hat, x.g_h);
  for (double v : estimator_error(x, maps)) CHECK(v == 0.0);
}

TEST_CASE("estimator decay on a converged ES run") {
  const MapPair maps = two_lobe();
  // Fast filter relative to the slowest dither keeps the ripple small.
  const EsConfig cfg{0.01, 1.0, 1.0, 1e4, 0.1, {10.0, 13.0}};
  EsState x0 = EsState::zeros(2);
  x0.theta_hat = {-1.0, 0.0};
  SimSpec s;
  s.dt = default_es_dt(cfg);
  s.t_final = 60.0;
  s.sample_stride = 5;
  const auto tr = simulate_es(maps, cfg, x0, s);
  const auto r = check_estimator_decay(tr, maps, cfg, 20.0, 1.0, 0.5, 5.0);
  CHECK(r.pass);
}

TEST_CASE("report serialization") {
  DiagnosticsReport rep;
  CheckResult a;
  a.name = "a";
  a.pass = true;
  a.margin = 0.5;
  rep.add(a);
  CheckResult b;
  b.name = "b";
  b.pass = false;
  b.margin = -std::numeric_limits<double>::infinity();
  b.worst_time = 1.5;
  b.worst_theta = {1, 2};
  rep.add(b);
  CHECK_FALSE(rep.all_pass());
  b.pass = true;
  rep.add(b);
  CHECK(rep.checks.size() == 2);
  CHECK(rep.all_pass());
  const auto doc = nlohmann::json::parse(rep.to_json());
  CHECK(doc["pass"] == true);
  CHECK(doc["checks"][0]["worst_location"].is_null());
  CHECK(doc["checks"][1]["margin"].is_null());
  CHECK(doc["checks"][1]["worst_location"]["t"] == 1.5);
  CHECK(rep.find("b") != nullptr);
  CHECK(rep.find("c") == nullptr);
}

TEST_CASE("transient total variation") {
  Trajectory t;
  t.system = SystemKind::Exact;
  t.n = 1;
  t.state_dim = 1;
  for (int i = 0; i <= 10; ++i) {
    t.times.push_back(i);
    t.states.push_back(i % 2 ? 1.0 : 0.0);
  }
  CHECK(transient_total_variation(t, 0.5) == 5.0);
  CHECK(transient_total_variation(t, 1.0) == 10.0);
}
