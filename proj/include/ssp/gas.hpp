#pragma once

// Angle-variable algebra for 2-D steady polytropic gas flow.
//
// The supersonic state is described by the flow angle theta (tan(theta) =
// v/u) and the Mach angle omega (sin(omega) = c/q).  The wave characteristics
// have inclinations alpha = theta + omega and beta = theta - omega, and the
// streamline direction is theta itself.  On top of (theta, omega) sit the
// transported scalars: entropy S = p rho^-gamma, Bernoulli B = q^2/2 +
// c^2/(gamma-1), their combination Omega = (1/4k)((1/g) ln S - ln B), and the
// quasi-invariant Xi = (1/4k) ln(sin^2 w/(k+sin^2 w)) - Omega whose
// characteristic derivatives stay bounded up to the sonic set.

#include <cmath>
#include <string>

#include "ssp/common.hpp"

namespace ssp {

struct GasModel {
  double gamma = 1.4;   // adiabatic exponent, > 1
  double kappa = 0.2;   // (gamma - 1) / 2
  double h0 = 0.0;      // constant value of the invariant H = d+Omega / G(omega)

  static GasModel make(double gamma, double h0) {
    if (!(gamma > 1.0)) fail(errc::invalid_config, "gamma must exceed 1, got " + std::to_string(gamma));
    if (!(h0 >= 0.0)) fail(errc::invalid_config, "H0 must be nonnegative, got " + std::to_string(h0));
    return GasModel{gamma, 0.5 * (gamma - 1.0), h0};
  }

  // G(omega) at the sonic value omega = pi/2.
  double g_sonic() const { return std::pow(1.0 / (kappa + 1.0), (kappa + 1.0) / (2.0 * kappa)); }
  // Supremum of the omega-part of Xi, attained at omega = pi/2.
  double xi_sonic() const { return std::log(1.0 / (kappa + 1.0)) / (4.0 * kappa); }
};

struct AngleState {
  double theta = 0.0;  // flow angle, radians
  double omega = 0.0;  // Mach angle, radians, in (0, pi/2]

  double alpha() const { return theta + omega; }
  double beta() const { return theta - omega; }
  bool sonic() const { return std::cos(omega) < kSonicCosTol; }
};

struct Slopes {
  double lambda_plus = 0.0;   // tan(alpha)
  double lambda_minus = 0.0;  // tan(beta)
  double lambda_zero = 0.0;   // tan(theta)
};

// Characteristic slopes tan(theta +- omega) and tan(theta).  Degenerate at
// the sonic set, and any angle near an odd multiple of pi/2 overflows tan.
inline Slopes char_slopes(const AngleState& s) {
  if (s.sonic()) fail(errc::degenerate_sonic, "characteristic slopes at omega = pi/2");
  const double angs[3] = {s.alpha(), s.beta(), s.theta};
  for (double a : angs) {
    if (std::abs(std::cos(a)) < kSonicCosTol)
      fail(errc::slope_overflow, "characteristic inclination within tolerance of +-pi/2");
  }
  return Slopes{std::tan(s.alpha()), std::tan(s.beta()), std::tan(s.theta)};
}

namespace detail {
// G and the omega-part of Xi as functions of sin^2(omega).
inline double g_from_sin2(double s2, const GasModel& m) {
  return std::pow(s2 / (m.kappa + s2), (m.kappa + 1.0) / (2.0 * m.kappa));
}
inline double xi_from_sin2(double s2, const GasModel& m) {
  return std::log(s2 / (m.kappa + s2)) / (4.0 * m.kappa);
}
}  // namespace detail

// G(omega) = (sin^2 w / (kappa + sin^2 w))^((kappa+1)/(2 kappa)), strictly
// increasing on (0, pi/2].
inline double g_of_omega(double omega, const GasModel& m) {
  return detail::g_from_sin2(sqr(std::sin(omega)), m);
}

// The omega-part of Xi; strictly increasing, maximal at the sonic value.
inline double xi_of_omega(double omega, const GasModel& m) {
  return detail::xi_from_sin2(sqr(std::sin(omega)), m);
}

struct SinCos {
  double sin_omega = 1.0;
  double cos_omega = 0.0;
};

// Exact inverse of the omega-map: xi = (1/4k) ln(s^2/(k+s^2)) gives
// s^2 = k E / (1 - E) with E = e^{4 k xi}, and cos^2 = (1 - (k+1)E)/(1 - E),
// which stays well conditioned as the sonic value is approached.
inline SinCos invert_xi_map_sincos(double value, const GasModel& m) {
  const double max = m.xi_sonic();
  if (value > max + 1e-15 * (1.0 + std::abs(max)))
    fail(errc::out_of_range, "value exceeds the sonic maximum of the omega-map");
  const double e = std::exp(4.0 * m.kappa * std::min(value, max));
  const double denom = 1.0 - e;  // > 0 strictly below the sonic value
  SinCos r;
  if (denom <= 0.0 || 1.0 - (m.kappa + 1.0) * e <= 0.0) {
    r.sin_omega = 1.0;
    r.cos_omega = 0.0;
    return r;
  }
  r.sin_omega = std::sqrt(std::min(1.0, m.kappa * e / denom));
  r.cos_omega = std::sqrt(std::max(0.0, (1.0 - (m.kappa + 1.0) * e) / denom));
  return r;
}

inline double invert_xi_map(double value, const GasModel& m) {
  const SinCos sc = invert_xi_map_sincos(value, m);
  return std::atan2(sc.sin_omega, sc.cos_omega);
}

struct PrimitiveState {
  double rho = 0.0;
  double u = 0.0, v = 0.0;
  double p = 0.0;
  double c = 0.0;  // sound speed
  double q = 0.0;  // flow speed
  double S = 0.0;  // p rho^-gamma
  double B = 0.0;  // q^2/2 + c^2/(gamma-1)
};

// Invert (theta, omega, S, B) to the physical state.  From sin w = c/q and
// the Bernoulli relation, q^2 = B / (1/2 + sin^2 w /(2 kappa)); the rest is
// the polytropic closure.
inline PrimitiveState recover_primitives(const AngleState& st, double S, double B, const GasModel& m) {
  if (!(S > 0.0) || !(B > 0.0)) fail(errc::non_physical, "entropy and Bernoulli values must be positive");
  const double sw = std::sin(st.omega);
  if (!(sw > 0.0) || st.omega > 0.5 * kPi + 1e-12)
    fail(errc::non_physical, "Mach angle outside (0, pi/2]");
  PrimitiveState out;
  out.q = std::sqrt(B / (0.5 + sqr(sw) / (2.0 * m.kappa)));
  out.c = out.q * sw;
  out.rho = std::pow(sqr(out.c) / (m.gamma * S), 1.0 / (m.gamma - 1.0));
  out.p = S * std::pow(out.rho, m.gamma);
  out.u = out.q * std::cos(st.theta);
  out.v = out.q * std::sin(st.theta);
  out.S = S;
  out.B = B;
  if (!(out.rho > 0.0) || !(out.p > 0.0) || !(out.q > 0.0) || !std::isfinite(out.rho))
    fail(errc::non_physical, "reconstructed state has a non-positive quantity");
  return out;
}

struct FlowScalars {
  double omega_sb = 0.0;  // Omega, the S/B combination
  double xi = 0.0;
  double h = 0.0;
};

// Omega = (1/4 kappa)((1/gamma) ln S - ln B).
inline double omega_from_entropy_bernoulli(double S, double B, const GasModel& m) {
  return (std::log(S) / m.gamma - std::log(B)) / (4.0 * m.kappa);
}

// ln S back from (Omega, B): S = exp(gamma (4 kappa Omega + ln B)).
inline double entropy_from_omega_bernoulli(double omega_sb, double B, const GasModel& m) {
  return std::exp(m.gamma * (4.0 * m.kappa * omega_sb + std::log(B)));
}

struct Gradient {
  double fx = 0.0, fy = 0.0;
};

// Convert characteristic directional derivatives (d+f, d-f) to the Cartesian
// gradient: dx = -(sin b d+ - sin a d-)/sin 2w, dy = (cos b d+ - cos a d-)/sin 2w.
inline Gradient cartesian_gradients(double dplus, double dminus, const AngleState& s) {
  if (s.sonic()) fail(errc::degenerate_sonic, "gradient conversion at omega = pi/2");
  const double s2w = std::sin(2.0 * s.omega);
  Gradient g;
  g.fx = -(std::sin(s.beta()) * dplus - std::sin(s.alpha()) * dminus) / s2w;
  g.fy = (std::cos(s.beta()) * dplus - std::cos(s.alpha()) * dminus) / s2w;
  return g;
}

struct Directional {
  double dplus = 0.0, dminus = 0.0, dzero = 0.0;
};

// Project a Cartesian gradient onto the characteristic directions.
inline Directional characteristic_derivatives(const Gradient& g, const AngleState& s) {
  Directional d;
  d.dplus = std::cos(s.alpha()) * g.fx + std::sin(s.alpha()) * g.fy;
  d.dminus = std::cos(s.beta()) * g.fx + std::sin(s.beta()) * g.fy;
  d.dzero = std::cos(s.theta) * g.fx + std::sin(s.theta) * g.fy;
  return d;
}

}  // namespace ssp
