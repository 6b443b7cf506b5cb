#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "safees/dynamics.hpp"
#include "safees/error.hpp"
#include "safees/integrator.hpp"

using namespace safees;

namespace {

MapPair two_lobe() {
  return MapPair::parse("(x1 + 3)^2 + x2^2", "exp(-(x1 - 1)^2 - x2^2) + exp(-(x1 + 1)^2 - x2^2) - 0.5", 2);
}

const RhsFn decay = [](double, std::span<const double> x, std::span<double> dx) { dx[0] = -x[0]; };

// Smooth nonlinear test problem: x' = y, y' = -sin(x) + 0.1 cos(t).
const RhsFn pendulum = [](double t, std::span<const double> x, std::span<double> dx) {
  dx[0] = x[1];
  dx[1] = -std::sin(x[0]) + 0.1 * std::cos(t);
};

SimSpec spec(double dt, double t_final, std::size_t stride = 1, SystemKind s = SystemKind::Exact) {
  SimSpec sp;
  sp.dt = dt;
  sp.t_final = t_final;
  sp.sample_stride = stride;
  sp.system = s;
  return sp;
}

double last(const Trajectory& tr, std::size_t k = 0) { return tr.state(tr.size() - 1)[k]; }

}  // namespace

TEST_CASE("step count and sampling") {
  CHECK(spec(0.01, 1.0).step_count() == 100);
  CHECK(spec(0.01, 1.0, 30).step_count() == 120);
  CHECK(spec(0.3, 1.0).step_count() == 3);
  CHECK_THROWS_AS(spec(0.0, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(spec(0.1, -1.0).validate(), ConfigError);
  CHECK_THROWS_AS(spec(0.1, 1.0, 0).validate(), ConfigError);

  const Trajectory tr = integrate(decay, std::vector<double>{1.0}, spec(0.01, 1.0, 10), 1, SystemKind::Exact);
  CHECK(tr.size() == 11);
  CHECK(tr.times.front() == 0.0);
  CHECK(tr.times.back() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(tr.times[3] == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("RK4 on the linear decay problem") {
  const Trajectory tr = integrate(decay, std::vector<double>{1.0}, spec(0.01, 1.0), 1, SystemKind::Exact);
  CHECK(std::abs(last(tr) - std::exp(-1.0)) < 1e-9);

  const double e1 = std::abs(last(integrate(decay, std::vector<double>{1.0}, spec(0.1, 1.0), 1, SystemKind::Exact)) - std::exp(-1.0));
  const double e2 = std::abs(last(integrate(decay, std::vector<double>{1.0}, spec(0.05, 1.0), 1, SystemKind::Exact)) - std::exp(-1.0));
  CHECK(e1 / e2 > 15.0);
  CHECK(e1 / e2 < 17.0);
}

TEST_CASE("step halving on a smooth nonlinear problem") {
  const std::vector<double> x0{1.0, 0.0};
  const double ref = last(integrate(pendulum, x0, spec(1e-4, 5.0), 2, SystemKind::Exact));
  double prev = 0;
  for (double dt : {0.1, 0.05, 0.025}) {
    const double err = std::abs(last(integrate(pendulum, x0, spec(dt, 5.0), 2, SystemKind::Exact)) - ref);
    if (prev > 0) CHECK(prev / err >= 8.0);
    prev = err;
  }
}

TEST_CASE("non-finite state aborts with the last valid time") {
  const RhsFn blowup = [](double, std::span<const double> x, std::span<double> dx) { dx[0] = x[0] * x[0]; };
  try {
    integrate(blowup, std::vector<double>{1.0}, spec(0.01, 5.0), 1, SystemKind::Exact);
    FAIL("expected NumericalAbort");
  } catch (const NumericalAbort& e) {
    CHECK(e.last_valid_time() > 0.9);
    CHECK(e.last_valid_time() < 1.1);
  }
  CHECK_THROWS_AS(integrate(decay, std::vector<double>{std::nan("")}, spec(0.01, 1.0), 1, SystemKind::Exact),
                  NumericalAbort);
}

TEST_CASE("deterministic trajectories") {
  const MapPair maps = two_lobe();
  const EsConfig cfg{0.0005, 3.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
  EsState x0 = EsState::zeros(2);
  x0.theta_hat = {-2.5, -0.5};
  const SimSpec sp = spec(default_es_dt(cfg), 50.0, 5, SystemKind::Es);
  const Trajectory a = simulate_es(maps, cfg, x0, sp), b = simulate_es(maps, cfg, x0, sp);
  CHECK(a.states == b.states);
  CHECK(a.times == b.times);
  CHECK(a.state_dim == 8);
  CHECK(a.h_hat.size() == a.size());
}

TEST_CASE("dither resolution guard") {
  const EsConfig cfg{0.0005, 3.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
  CHECK(default_es_dt(cfg) == doctest::Approx(2 * std::numbers::pi / 650));
  SimSpec coarse = spec(0.1, 1.0, 1, SystemKind::Es);
  CHECK_THROWS_AS(check_dither_resolution(coarse, cfg), ConfigError);
  coarse.allow_coarse_dt = true;
  CHECK_NOTHROW(check_dither_resolution(coarse, cfg));
  CHECK_NOTHROW(check_dither_resolution(spec(0.01, 1.0, 1, SystemKind::Es), cfg));
  CHECK(default_exact_dt(2.0) == 5e-4);
}

TEST_CASE("exact flow from a safe start keeps the barrier bound") {
  const MapPair maps = two_lobe();
  const Trajectory tr = simulate_exact(maps, 1.0, 1e4, std::vector<double>{-1.0, 0.0}, spec(1e-3, 20.0, 10));
  const double h0 = tr.h_hat.front();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    CHECK(tr.h_hat[i] >= -1e-3);
    CHECK(tr.h_hat[i] >= h0 * std::exp(-tr.times[i]) - 1e-3);
  }
}

TEST_CASE("exact gradient flow without an active filter decreases J") {
  const MapPair maps = MapPair::parse("(x1 - 1)^2 + 2 * x2^2 + 0.1 * x1^4", "100 - x1^2 - x2^2", 2);
  const Trajectory tr = simulate_exact(maps, 1e-3, 1e4, std::vector<double>{3.0, -2.0}, spec(1e-3, 5.0, 10));
  for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr.j_hat[i] <= tr.j_hat[i - 1] + 1e-9);
}

TEST_CASE("step halving on both systems") {
  const MapPair maps = two_lobe();
  // Unsafe start: the filter stays active, so the flow is smooth along the run.
  const std::vector<double> th0{-3.0, 0.3};
  auto inf_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  };
  auto end_of = [](const Trajectory& tr) {
    const auto x = tr.state(tr.size() - 1);
    return std::vector<double>(x.begin(), x.end());
  };
  {
    auto run = [&](double dt) { return end_of(simulate_exact(maps, 1.0, 1e4, th0, spec(dt, 0.4))); };
    const auto a = run(0.02), b = run(0.01), c = run(0.005);
    CHECK(inf_diff(a, b) / inf_diff(b, c) >= 8.0);
  }
  {
    const EsConfig cfg{0.05, 1.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
    EsState x0 = EsState::zeros(2);
    x0.theta_hat = th0;
    x0.g_j.assign(2, 0.0);
    x0.g_h.assign(2, 0.0);
    x0.eta_j = maps.j.value_and_grad(th0, x0.g_j);
    x0.eta_h = maps.h.value_and_grad(th0, x0.g_h);
    auto run = [&](double dt) { return end_of(simulate_es(maps, cfg, x0, spec(dt, 2.0, 1, SystemKind::Es))); };
    const auto a = run(0.008), b = run(0.004), c = run(0.002);
    CHECK(inf_diff(a, b) / inf_diff(b, c) >= 8.0);
  }
}

TEST_CASE("time rescaling") {
  const Trajectory tr = integrate(decay, std::vector<double>{1.0}, spec(0.5, 10000.0, 100), 1, SystemKind::Exact);
  const Trajectory same = time_rescale(tr, 1.0);
  CHECK(same.times == tr.times);
  const Trajectory scaled = time_rescale(tr, 10.0 * 0.0001);
  CHECK(scaled.times.back() == doctest::Approx(10.0).epsilon(1e-14));
  const Trajectory back = time_rescale(scaled, 1.0 / (10.0 * 0.0001));
  for (std::size_t i = 0; i < tr.size(); ++i) CHECK(std::abs(back.times[i] - tr.times[i]) <= 1e-12 * std::max(1.0, tr.times[i]));
  CHECK_THROWS(time_rescale(tr, 0.0));
}

TEST_CASE("applied point") {
  const MapPair maps = two_lobe();
  const EsConfig cfg{0.0005, 3.0, 10.0, 1e4, 0.1, {10.0, 13.0}};
  EsState x0 = EsState::zeros(2);
  x0.theta_hat = {0.0, 0.0};
  const Trajectory tr = simulate_es(maps, cfg, x0, spec(default_es_dt(cfg), 1.0, 1, SystemKind::Es));
  for (std::size_t i = 0; i < tr.size(); i += 7) {
    const auto th = tr.applied(i, &cfg);
    const auto s = dither_s(tr.times[i], cfg);
    CHECK(th[0] == tr.theta_hat(i)[0] + s[0]);
    CHECK(tr.h_applied[i] == maps.h.eval(th));
  }
}
