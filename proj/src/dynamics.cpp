#include "safees/dynamics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "safees/error.hpp"

namespace safees {

namespace {

// Scratch for parameter-sized temporaries without heap traffic when n is small.
class Scratch {
 public:
  explicit Scratch(std::size_t n) : n_(n) {
    if (n > inline_.size()) heap_.resize(n);
  }
  std::span<double> get() { return heap_.empty() ? std::span<double>(inline_.data(), n_) : std::span<double>(heap_); }

 private:
  std::size_t n_;
  std::array<double, 16> inline_{};
  std::vector<double> heap_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void EsConfig::validate(std::size_t n) const {
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0))
      throw ConfigError(std::string("ES constant '") + name + "' must be finite and positive");
  };
  positive(k, "k");
  positive(c, "c");
  positive(omega_f, "omega_f");
  positive(m_plus, "m_plus");
  positive(a, "a");
  if (omegas.size() != n)
    throw ConfigError("expected " + std::to_string(n) + " dither frequencies, got " +
                      std::to_string(omegas.size()));
  for (double w : omegas) positive(w, "omegas[i]");
}

EsState EsState::zeros(std::size_t n) {
  return EsState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0,
                 std::vector<double>(n, 0.0), 0.0};
}

EsState EsState::unpack(std::span<const double> flat, std::size_t n) {
  if (flat.size() != flat_size(n)) throw Error("ES state must have length 3n+2");
  EsState s;
  s.theta_hat.assign(flat.begin(), flat.begin() + n);
  s.g_j.assign(flat.begin() + n, flat.begin() + 2 * n);
  s.eta_j = flat[2 * n];
  s.g_h.assign(flat.begin() + 2 * n + 1, flat.begin() + 3 * n + 1);
  s.eta_h = flat[3 * n + 1];
  return s;
}

void EsState::pack(std::span<double> out) const {
  const std::size_t nn = n();
  if (out.size() != flat_size(nn) || g_j.size() != nn || g_h.size() != nn)
    throw Error("ES state must have length 3n+2");
  std::copy(theta_hat.begin(), theta_hat.end(), out.begin());
  std::copy(g_j.begin(), g_j.end(), out.begin() + nn);
  out[2 * nn] = eta_j;
  std::copy(g_h.begin(), g_h.end(), out.begin() + 2 * nn + 1);
  out[3 * nn + 1] = eta_h;
}

std::vector<double> EsState::flatten() const {
  std::vector<double> flat(flat_size(n()));
  pack(flat);
  return flat;
}

std::vector<double> dither_s(double t, const EsConfig& cfg) {
  std::vector<double> s(cfg.omegas.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = cfg.a * std::sin(cfg.omegas[i] * t);
  return s;
}

std::vector<double> dither_m(double t, const EsConfig& cfg) {
  std::vector<double> m(cfg.omegas.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (2.0 / cfg.a) * std::sin(cfg.omegas[i] * t);
  return m;
}

double safety_gain(std::span<const double> g_j, std::span<const double> g_h, double eta_h,
                   double c, double m_plus) {
  const double active = dot(g_j, g_h) - c * eta_h;
  if (!(active > 0.0)) return 0.0;
  const double norm2 = dot(g_h, g_h);
  const double inv = norm2 > 0.0 ? 1.0 / norm2 : std::numeric_limits<double>::infinity();
  return std::min(inv, m_plus) * active;
}

void filtered_direction(std::span<const double> g_j, std::span<const double> g_h, double eta_h,
                        double c, double m_plus, std::span<double> out) {
  const double gain = safety_gain(g_j, g_h, eta_h, c, m_plus);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -g_j[i] + gain * g_h[i];
}

void es_rhs(std::span<const double> x, double t, const EsConfig& cfg, const MapPair& maps,
            std::span<double> dx) {
  const std::size_t n = maps.dim();
  const auto theta_hat = x.subspan(0, n);
  const auto g_j = x.subspan(n, n);
  const double eta_j = x[2 * n];
  const auto g_h = x.subspan(2 * n + 1, n);
  const double eta_h = x[3 * n + 1];

  Scratch theta_buf(n);
  Scratch m_buf(n);
  auto theta = theta_buf.get();
  auto m = m_buf.get();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(cfg.omegas[i] * t);
    theta[i] = theta_hat[i] + cfg.a * s;
    m[i] = (2.0 / cfg.a) * s;
  }
  const double j = maps.j.eval(theta);
  const double h = maps.h.eval(theta);

  auto d_theta = dx.subspan(0, n);
  filtered_direction(g_j, g_h, eta_h, cfg.c, cfg.m_plus, d_theta);
  const double kw = cfg.k * cfg.omega_f;
  for (std::size_t i = 0; i < n; ++i) {
    d_theta[i] *= kw;
    dx[n + i] = -cfg.omega_f * (g_j[i] - (j - eta_j) * m[i]);
    dx[2 * n + 1 + i] = -cfg.omega_f * (g_h[i] - (h - eta_h) * m[i]);
  }
  dx[2 * n] = -cfg.omega_f * (eta_j - j);
  dx[3 * n + 1] = -cfg.omega_f * (eta_h - h);
}

EsState es_rhs(const EsState& state, double t, const EsConfig& cfg, const MapPair& maps) {
  const std::size_t n = maps.dim();
  if (state.n() != n) throw Error("ES state dimension does not match maps");
  const std::vector<double> x = state.flatten();
  std::vector<double> dx(x.size());
  es_rhs(x, t, cfg, maps, dx);
  return EsState::unpack(dx, n);
}

void exact_rhs(std::span<const double> theta, const MapPair& maps, double c, double m_plus,
               std::span<double> out) {
  const std::size_t n = maps.dim();
  Scratch gj_buf(n);
  Scratch gh_buf(n);
  auto gj = gj_buf.get();
  auto gh = gh_buf.get();
  maps.j.value_and_grad(theta, gj);
  const double h = maps.h.value_and_grad(theta, gh);
  filtered_direction(gj, gh, h, c, m_plus, out);
}

std::vector<double> exact_rhs(std::span<const double> theta, const MapPair& maps, double c,
                              double m_plus) {
  std::vector<double> out(maps.dim());
  exact_rhs(theta, maps, c, m_plus, out);
  return out;
}

std::vector<double> disturbed_rhs(std::span<const double> theta, const Disturbance& w,
                                  const MapPair& maps, double c, double m_plus) {
  const std::size_t n = maps.dim();
  if (w.w1.size() != n || w.w2.size() != n) throw Error("disturbance dimension does not match maps");
  std::vector<double> gj(n), gh(n), out(n);
  maps.j.value_and_grad(theta, gj);
  const double h = maps.h.value_and_grad(theta, gh) + w.w3;
  for (std::size_t i = 0; i < n; ++i) {
    gj[i] += w.w1[i];
    gh[i] += w.w2[i];
  }
  filtered_direction(gj, gh, h, c, m_plus, out);
  return out;
}

}  // namespace safees
