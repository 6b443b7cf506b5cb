#pragma once

// Right-hand sides of the safe extremum-seeking loop and of the reduced
// (exact-gradient) safety-filtered gradient flow.
//
// Flat ES state layout, length 3n+2:
//   [ theta_hat (n) | G_J (n) | eta_J | G_h (n) | eta_h ]

#include <cstddef>
#include <span>
#include <vector>

#include "safees/expr.hpp"

namespace safees {

struct EsConfig {
  double k = 0.0;        // parameter-update gain
  double c = 0.0;        // barrier decay rate
  double omega_f = 0.0;  // estimator filter rate
  double m_plus = 0.0;   // clamp on the inverse squared barrier-gradient norm
  double a = 0.0;        // dither amplitude
  std::vector<double> omegas;

  /// Throws ConfigError unless every constant is finite and strictly positive
  /// and omegas has length n.
  void validate(std::size_t n) const;
};

struct EsState {
  std::vector<double> theta_hat;
  std::vector<double> g_j;
  double eta_j = 0.0;
  std::vector<double> g_h;
  double eta_h = 0.0;

  static EsState zeros(std::size_t n);
  static EsState unpack(std::span<const double> flat, std::size_t n);
  static std::size_t flat_size(std::size_t n) noexcept { return 3 * n + 2; }

  std::size_t n() const noexcept { return theta_hat.size(); }
  std::vector<double> flatten() const;
  void pack(std::span<double> out) const;
};

struct Disturbance {
  std::vector<double> w1;  // added to grad J
  std::vector<double> w2;  // added to grad h
  double w3 = 0.0;         // added to h
};

std::vector<double> dither_s(double t, const EsConfig& cfg);
std::vector<double> dither_m(double t, const EsConfig& cfg);

/// min{|g_h|^-2, m_plus} * max{g_j.g_h - c*eta_h, 0}. Returns 0 without
/// touching |g_h| when the max term is inactive.
double safety_gain(std::span<const double> g_j, std::span<const double> g_h, double eta_h,
                   double c, double m_plus);

/// -g_j + safety_gain(...) * g_h, written into `out`.
void filtered_direction(std::span<const double> g_j, std::span<const double> g_h, double eta_h,
                        double c, double m_plus, std::span<double> out);

EsState es_rhs(const EsState& state, double t, const EsConfig& cfg, const MapPair& maps);
/// Allocation-free variant over flat state vectors.
void es_rhs(std::span<const double> state, double t, const EsConfig& cfg, const MapPair& maps,
            std::span<double> dstate);

std::vector<double> exact_rhs(std::span<const double> theta, const MapPair& maps, double c,
                              double m_plus);
void exact_rhs(std::span<const double> theta, const MapPair& maps, double c, double m_plus,
               std::span<double> out);

std::vector<double> disturbed_rhs(std::span<const double> theta, const Disturbance& w,
                                  const MapPair& maps, double c, double m_plus);

}  // namespace safees
