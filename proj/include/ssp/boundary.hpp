#pragma once

// Boundary data for the patch problem: a rising, concave streamline arc from
// the sonic point C down to the corner B, and a wave-characteristic arc from
// B up to the second sonic point A.  This module holds the sampled data
// model, the admissibility validators, analytic boundary derivatives, the
// derived a-priori bound constants, and a generator of canonical admissible
// families.
//
// Admissibility, in the validators' vocabulary:
//   streamline-shape                 monotone increasing, concave, Mach angle
//                                    decreasing from the sonic value, corner
//                                    Mach angle >= pi/4
//   streamline-slope-compatibility   theta' < cos(w)(sin w)'/(kappa+sin^2 w)
//                                    along the streamline
//   characteristic-shape             the arc is a plus-family characteristic
//                                    (theta + omega = arccot psi'), concave,
//                                    sonic at its far end, and its (theta,
//                                    omega) data solve the characteristic ODE
//   flow-angle-decrease              H0 sqrt(1+psi'^2) G(w) <
//                                    (sin w)'/(2 sin w (kappa+sin^2 w))
//   corner-continuity                (theta, omega) agree at B
//   corner-derivative-compatibility  d+theta agrees at B from both arcs

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssp/common.hpp"
#include "ssp/gas.hpp"
#include "ssp/interp.hpp"

namespace ssp {

struct StreamlineBoundary {
  // Samples over [x1, x2]; x1 is the sonic point C, x2 the corner B.
  std::vector<double> x, phi, phi1, phi2, sin_omega, d_sin_omega;
  double phi0_bound = 0.0;  // positive lower bound on phi'
  double phi1_bound = 0.0;  // upper bound on phi'

  double x1() const { return x.front(); }
  double x2() const { return x.back(); }
  std::size_t size() const { return x.size(); }
  double theta_at(std::size_t i) const { return std::atan(phi1[i]); }
};

struct CharacteristicBoundary {
  // Samples over [y2, y3]; y2 is the corner B, y3 the sonic point A.
  std::vector<double> y, psi, psi1, psi2, theta, sin_omega;
  double psi1_bound = 0.0;  // bound on |psi'|

  double y2() const { return y.front(); }
  double y3() const { return y.back(); }
  std::size_t size() const { return y.size(); }
};

struct ConditionReport {
  std::string id;
  bool pass = false;
  double worst_location = 0.0;  // abscissa of the worst violation (or margin minimum)
  double worst_margin = 0.0;    // minimal margin; negative means violated
  std::string detail;
};

struct BoundaryValidationReport {
  std::vector<ConditionReport> conditions;

  bool valid() const {
    for (const auto& c : conditions)
      if (!c.pass) return false;
    return !conditions.empty();
  }
  const ConditionReport* find(const std::string& id) const {
    for (const auto& c : conditions)
      if (c.id == id) return &c;
    return nullptr;
  }
};

struct DiagnosticsBounds {
  double M0 = 0.0;    // max of d+Xi over both arcs and of -d-Xi over the streamline
  double m0 = 0.0;    // corresponding boundary minimum
  double Mbar = 0.0;  // 2(kappa+2) M0 + 2(kappa+1) H0
  double d = 0.0;     // diameter of the sampled boundary hull
  double lower = 0.0; // m0 exp(-2 d Mbar)
};

namespace detail {

// Strict-inequality margin used for all "< 0" admissibility checks.
inline constexpr double kStrictMargin = 1e-12;

// The streamline slope-compatибility quantity
//   K(x) = phi''/(1+phi'^2) - cos(w)(sin w)'/(kappa + sin^2 w),
// required negative along the arc.
inline double streamline_compat(const StreamlineBoundary& b, std::size_t i, const GasModel& m) {
  const double s = b.sin_omega[i];
  const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
  return b.phi2[i] / (1.0 + sqr(b.phi1[i])) - c * b.d_sin_omega[i] / (m.kappa + s * s);
}

inline void require_ordered(const std::vector<double>& t, std::size_t n_min, const char* what) {
  if (t.size() < n_min)
    fail(errc::malformed_boundary, std::string(what) + " needs at least " + std::to_string(n_min) + " samples");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) fail(errc::malformed_boundary, std::string(what) + " samples not strictly ordered");
}

struct MarginTracker {
  double margin = std::numeric_limits<double>::infinity();
  double where = 0.0;
  void update(double value, double location) {
    if (value < margin) {
      margin = value;
      where = location;
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Validators

inline BoundaryValidationReport validate_streamline(const StreamlineBoundary& b, const GasModel& m) {
  detail::require_ordered(b.x, 8, "streamline boundary");
  BoundaryValidationReport rep;

  {
    ConditionReport c;
    c.id = "streamline-shape";
    detail::MarginTracker t;
    const double s45 = std::sin(0.25 * kPi);
    for (std::size_t i = 0; i < b.size(); ++i) {
      t.update(b.phi1[i], b.x[i]);                     // phi' > 0
      t.update(-b.phi2[i], b.x[i]);                    // phi'' < 0
      t.update(b.phi1[i] - b.phi0_bound, b.x[i]);      // phi' >= phi0
      t.update(b.phi1_bound - b.phi1[i], b.x[i]);      // phi' <= phi1 bound
      t.update(-b.d_sin_omega[i], b.x[i]);             // (sin w)' < 0
    }
    const bool sonic_at_c = std::abs(b.sin_omega.front() - 1.0) <= 1e-12;
    const bool corner_range = b.sin_omega.back() >= s45 - 1e-12;
    c.pass = sonic_at_c && corner_range && t.margin > detail::kStrictMargin;
    c.worst_margin = t.margin;
    c.worst_location = t.where;
    std::ostringstream os;
    os << "monotone/concave margin " << t.margin << " at x=" << t.where;
    if (!sonic_at_c) os << "; arc does not start sonic (sin w = " << b.sin_omega.front() << ")";
    if (!corner_range) os << "; corner Mach angle below pi/4";
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  {
    ConditionReport c;
    c.id = "streamline-slope-compatibility";
    detail::MarginTracker t;
    for (std::size_t i = 0; i < b.size(); ++i) t.update(-detail::streamline_compat(b, i, m), b.x[i]);
    c.pass = t.margin > detail::kStrictMargin;
    c.worst_margin = t.margin;
    c.worst_location = t.where;
    std::ostringstream os;
    os << "min of -K(x) is " << t.margin << " at x=" << t.where;
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  return rep;
}

inline BoundaryValidationReport validate_characteristic(const CharacteristicBoundary& b, const GasModel& m) {
  detail::require_ordered(b.y, 8, "characteristic boundary");
  BoundaryValidationReport rep;

  const std::vector<double> dtheta = fd_derivative(b.y, b.theta);
  const std::vector<double> dsin = fd_derivative(b.y, b.sin_omega);
  const double hbar = (b.y.back() - b.y.front()) / double(b.size() - 1);
  // Discretization tolerance for the finite-difference ODE residual.  Near
  // the sonic tip theta is only C^{1,1/2} in y (the Mach angle approaches
  // pi/2 with a square-root cusp), so the stencil error degrades from O(h^2)
  // to O(sqrt(h)) within a few samples of the end; the per-sample tolerance
  // models that.
  const double tol_ode = 100.0 * hbar * hbar;
  // Cusp amplitude taken from the data's own slope one sample before the tip.
  const double cusp_amp = std::abs(dtheta[b.size() - 2]) + std::abs(dsin[b.size() - 2]);
  auto tol_ode_at = [&](double y_to_end, double rhs_scale) {
    const double d = std::max(y_to_end, hbar);
    return tol_ode * (1.0 + 10.0 * std::abs(rhs_scale)) + cusp_amp * std::pow(hbar / d, 1.5);
  };

  {
    ConditionReport c;
    c.id = "characteristic-shape";
    detail::MarginTracker t;
    double worst_ode = -1.0, worst_ode_y = b.y.front();
    double worst_dir = 0.0, worst_dir_y = b.y.front();
    for (std::size_t i = 0; i < b.size(); ++i) {
      t.update(b.psi1_bound - std::abs(b.psi1[i]), b.y[i]);  // |psi'| <= bound
      t.update(-b.psi2[i], b.y[i]);                          // psi'' < 0
      const double s = b.sin_omega[i];
      const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
      const double omega = std::atan2(s, cw);
      // plus-characteristic direction: theta + omega = arccot(psi')
      const double alpha = b.theta[i] + omega;
      const double dir = std::cos(alpha) - b.psi1[i] * std::sin(alpha);
      if (std::abs(dir) > std::abs(worst_dir)) {
        worst_dir = dir;
        worst_dir_y = b.y[i];
      }
      // characteristic ODE along the arc:
      //   theta' + cos(w)(sin w)'/(kappa+sin^2 w) = H0 sin(2w) G(w) sqrt(1+psi'^2)
      const double lhs = dtheta[i] + cw * dsin[i] / (m.kappa + s * s);
      const double rhs = m.h0 * 2.0 * s * cw * detail::g_from_sin2(s * s, m) * std::hypot(1.0, b.psi1[i]);
      const double res = std::abs(lhs - rhs) - tol_ode_at(b.y.back() - b.y[i], rhs);
      if (res > worst_ode) {
        worst_ode = res;
        worst_ode_y = b.y[i];
      }
    }
    const bool sonic_at_a = std::abs(b.sin_omega.back() - 1.0) <= 1e-8;
    const bool ode_ok = worst_ode <= 0.0;
    const bool dir_ok = std::abs(worst_dir) <= 1e-8;
    c.pass = sonic_at_a && ode_ok && dir_ok && t.margin > detail::kStrictMargin;
    c.worst_margin = std::min(t.margin, -worst_ode);
    c.worst_location = ode_ok ? t.where : worst_ode_y;
    std::ostringstream os;
    os << "shape margin " << t.margin << "; ODE residual over tolerance by " << worst_ode << " at y="
       << worst_ode_y << "; direction residual " << std::abs(worst_dir) << " at y=" << worst_dir_y;
    if (!sonic_at_a) os << "; far end is not sonic (sin w = " << b.sin_omega.back() << ")";
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  {
    ConditionReport c;
    c.id = "flow-angle-decrease";
    detail::MarginTracker t;
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {  // half-open arc: skip the sonic end
      const double s = b.sin_omega[i];
      const double lhs = m.h0 * std::hypot(1.0, b.psi1[i]) * detail::g_from_sin2(s * s, m);
      const double rhs = dsin[i] / (2.0 * s * (m.kappa + s * s));
      t.update(rhs - lhs, b.y[i]);
    }
    c.pass = t.margin > detail::kStrictMargin;
    c.worst_margin = t.margin;
    c.worst_location = t.where;
    std::ostringstream os;
    os << "min margin of (sin w)'/(2 sin w (kappa+sin^2 w)) - H0 sqrt(1+psi'^2) G is " << t.margin
       << " at y=" << t.where;
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  return rep;
}

inline BoundaryValidationReport validate_corner(const StreamlineBoundary& sb, const CharacteristicBoundary& cb,
                                                const GasModel& m) {
  BoundaryValidationReport rep;
  const std::size_t ib = sb.size() - 1;  // corner sample on the streamline

  {
    ConditionReport c;
    c.id = "corner-continuity";
    const double dth = cb.theta.front() - sb.theta_at(ib);
    const double dsw = cb.sin_omega.front() - sb.sin_omega[ib];
    const double err = std::max(std::abs(dth), std::abs(dsw));
    c.pass = err <= 1e-8;
    c.worst_margin = 1e-8 - err;
    c.worst_location = cb.y2();
    std::ostringstream os;
    os << "|dtheta| = " << std::abs(dth) << ", |dsin(omega)| = " << std::abs(dsw) << " at the corner";
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  {
    ConditionReport c;
    c.id = "corner-derivative-compatibility";
    // d+theta at B from the characteristic side: theta'(y2)/sqrt(1+psi'^2);
    // from the streamline side: cos(theta)cos(w) K(x2).
    const std::vector<double> dtheta = fd_derivative(cb.y, cb.theta);
    const double lhs = dtheta.front() / std::hypot(1.0, cb.psi1.front());
    const double th = sb.theta_at(ib);
    const double s = sb.sin_omega[ib];
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double rhs = std::cos(th) * cw * detail::streamline_compat(sb, ib, m);
    const double hbar = (cb.y3() - cb.y2()) / double(cb.size() - 1);
    const double tol = std::max(1e-8, hbar * hbar * (5.0 + 10.0 * (std::abs(lhs) + std::abs(rhs))));
    const double err = std::abs(lhs - rhs);
    c.pass = err <= tol;
    c.worst_margin = tol - err;
    c.worst_location = cb.y2();
    std::ostringstream os;
    os << "characteristic side " << lhs << ", streamline side " << rhs << ", |diff| = " << err << " (tol "
       << tol << ")";
    c.detail = os.str();
    rep.conditions.push_back(std::move(c));
  }

  return rep;
}

// ---------------------------------------------------------------------------
// Analytic boundary derivatives (the solver's seed data)

struct BoundaryDerivatives {
  // On the streamline arc, per sample:
  std::vector<double> bc_d0_theta, bc_d0_sin_omega, bc_dp_theta, bc_dm_theta, bc_dp_xi, bc_dm_xi;
  // On the characteristic arc, per sample:
  std::vector<double> ba_dp_theta, ba_dp_sin_omega, ba_dp_xi;
};

// Directional derivatives of the data along both arcs.  On the streamline
// d0 = cos(theta) d/dx; the plus/minus values follow from the split
//   d+-theta = cos(w) d0theta -+ cos^2(w) d0sin(w)/(kappa+sin^2 w),
// and d+-Xi uses the regular forms
//   d+Xi = -d0theta/(2 sin w) + cos w d0sin(w)/(2 sin w (kappa+sin^2 w)),
//   d-Xi = +d0theta/(2 sin w) + cos w d0sin(w)/(2 sin w (kappa+sin^2 w)),
// finite up to the sonic ends.  On the characteristic arc d+ = sin(alpha) d/dy
// and d+Xi = sin(alpha)(sin w)'/(2 sin w (kappa+sin^2 w)) - H0 G(w).
inline BoundaryDerivatives boundary_derivatives(const StreamlineBoundary& sb, const CharacteristicBoundary& cb,
                                                const GasModel& m) {
  BoundaryDerivatives out;
  const std::size_t nbc = sb.size();
  for (std::size_t i = 0; i < nbc; ++i) {
    const double th = sb.theta_at(i);
    const double s = sb.sin_omega[i];
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double thp = sb.phi2[i] / (1.0 + sqr(sb.phi1[i]));
    const double d0th = std::cos(th) * thp;
    const double d0sw = std::cos(th) * sb.d_sin_omega[i];
    const double ks = m.kappa + s * s;
    out.bc_d0_theta.push_back(d0th);
    out.bc_d0_sin_omega.push_back(d0sw);
    out.bc_dp_theta.push_back(cw * d0th - cw * cw * d0sw / ks);
    out.bc_dm_theta.push_back(cw * d0th + cw * cw * d0sw / ks);
    out.bc_dp_xi.push_back(-d0th / (2.0 * s) + cw * d0sw / (2.0 * s * ks));
    out.bc_dm_xi.push_back(d0th / (2.0 * s) + cw * d0sw / (2.0 * s * ks));
  }
  const std::vector<double> dtheta = fd_derivative(cb.y, cb.theta);
  const std::vector<double> dsin = fd_derivative(cb.y, cb.sin_omega);
  for (std::size_t j = 0; j < cb.size(); ++j) {
    const double s = cb.sin_omega[j];
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double alpha = cb.theta[j] + std::atan2(s, cw);
    const double sa = std::sin(alpha);
    const double ks = m.kappa + s * s;
    out.ba_dp_theta.push_back(sa * dtheta[j]);
    out.ba_dp_sin_omega.push_back(sa * dsin[j]);
    out.ba_dp_xi.push_back(sa * dsin[j] / (2.0 * s * ks) - m.h0 * detail::g_from_sin2(s * s, m));
  }

  // Sign pattern of the admissible class, away from the sonic endpoints.
  auto check = [&](const std::vector<double>& v, double sign, std::size_t lo, std::size_t hi, const char* name,
                   const std::vector<double>& where) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (!(sign * v[i] > 0.0)) {
        std::ostringstream os;
        os << name << " has the wrong sign (" << v[i] << ") at sample " << i << ", abscissa " << where[i];
        fail(errc::sign_violation, os.str());
      }
    }
  };
  check(out.bc_d0_theta, -1.0, 1, nbc, "d0 theta on the streamline", sb.x);
  check(out.bc_d0_sin_omega, -1.0, 1, nbc, "d0 sin(omega) on the streamline", sb.x);
  check(out.bc_dp_theta, -1.0, 1, nbc, "d+ theta on the streamline", sb.x);
  check(out.bc_dm_theta, -1.0, 1, nbc, "d- theta on the streamline", sb.x);
  check(out.ba_dp_theta, -1.0, 0, cb.size() - 1, "d+ theta on the characteristic arc", cb.y);
  check(out.ba_dp_sin_omega, 1.0, 0, cb.size() - 1, "d+ sin(omega) on the characteristic arc", cb.y);
  return out;
}

inline DiagnosticsBounds diagnostics_bounds(const StreamlineBoundary& sb, const CharacteristicBoundary& cb,
                                            const GasModel& m) {
  const BoundaryDerivatives d = boundary_derivatives(sb, cb, m);
  DiagnosticsBounds out;
  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  for (double v : d.bc_dp_xi) mx = std::max(mx, v), mn = std::min(mn, v);
  for (double v : d.ba_dp_xi) mx = std::max(mx, v), mn = std::min(mn, v);
  for (double v : d.bc_dm_xi) mx = std::max(mx, -v), mn = std::min(mn, -v);
  out.M0 = mx;
  out.m0 = mn;
  out.Mbar = 2.0 * (m.kappa + 2.0) * out.M0 + 2.0 * (m.kappa + 1.0) * m.h0;

  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < sb.size(); ++i) pts.push_back({sb.x[i], sb.phi[i]});
  for (std::size_t j = 0; j < cb.size(); ++j) pts.push_back({cb.psi[j], cb.y[j]});
  double diam = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) diam = std::max(diam, dist(pts[a], pts[b]));
  // Pad for the unsampled sonic arc between the two sonic endpoints.
  out.d = 1.05 * diam;
  out.lower = out.m0 * std::exp(-2.0 * out.d * out.Mbar);
  return out;
}

// ---------------------------------------------------------------------------
// Canonical admissible family

struct CanonicalParams {
  double gamma = 1.4;
  double h0 = 0.0;
  double x1 = 0.0;
  double x2 = 1.0;
  double omega_b = 0.25 * kPi;  // corner Mach angle, in [pi/4, pi/2)
  double theta_c = 0.45;        // flow angle at the sonic point C
  int n_samples = 513;
};

struct CanonicalBoundary {
  StreamlineBoundary streamline;
  CharacteristicBoundary characteristic;
};

namespace detail {

struct CharacteristicInit {
  double theta_b, omega_b, alpha_b, p_b, y2, x2;
};

// Integrate the characteristic-arc ODE system in s = sin(omega), which rises
// monotonically to the sonic value 1.  The free profile is
//   (sin w)'(y) = p(s) = p_b (1 + lambda (s - s_b)/(1 - s_b)),
// and for each s the remaining fields follow from
//   dy/ds = 1/p,  dtheta/ds = [H0 sin 2w G / sin(alpha) - cos(w) p/(kappa+sin^2 w)]/p,
//   dpsi/ds = cot(alpha)/p.
struct CharacteristicSolution {
  std::vector<double> y, theta, sin_omega, psi;
};

inline CharacteristicSolution integrate_characteristic(const CharacteristicInit& init, double lambda,
                                                       const GasModel& m, int fine_steps) {
  const double sb = std::sin(init.omega_b);
  const double span = 1.0 - sb;
  auto pfun = [&](double s) { return init.p_b * (1.0 + lambda * (s - sb) / span); };
  // State: (y, theta, psi); independent variable s.
  auto rhs = [&](double s, const std::array<double, 3>& st, std::array<double, 3>& f) {
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double alpha = st[1] + std::atan2(s, cw);
    const double p = pfun(s);
    const double sa = std::sin(alpha);
    const double dtheta_dy =
        m.h0 * 2.0 * s * cw * g_from_sin2(s * s, m) / sa - cw * p / (m.kappa + s * s);
    f[0] = 1.0 / p;
    f[1] = dtheta_dy / p;
    f[2] = (std::cos(alpha) / sa) / p;
  };
  CharacteristicSolution sol;
  std::array<double, 3> st{init.y2, init.theta_b, init.x2};
  const double hs = span / fine_steps;
  sol.y.push_back(st[0]);
  sol.theta.push_back(st[1]);
  sol.sin_omega.push_back(sb);
  sol.psi.push_back(st[2]);
  for (int k = 0; k < fine_steps; ++k) {
    const double s = sb + k * hs;
    std::array<double, 3> k1, k2, k3, k4, tmp;
    rhs(s, st, k1);
    for (int i = 0; i < 3; ++i) tmp[i] = st[i] + 0.5 * hs * k1[i];
    rhs(s + 0.5 * hs, tmp, k2);
    for (int i = 0; i < 3; ++i) tmp[i] = st[i] + 0.5 * hs * k2[i];
    rhs(s + 0.5 * hs, tmp, k3);
    for (int i = 0; i < 3; ++i) tmp[i] = st[i] + hs * k3[i];
    rhs(s + hs, tmp, k4);
    for (int i = 0; i < 3; ++i) st[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    sol.y.push_back(st[0]);
    sol.theta.push_back(st[1]);
    sol.sin_omega.push_back(std::min(1.0, sb + (k + 1) * hs));
    sol.psi.push_back(st[2]);
  }
  sol.sin_omega.back() = 1.0;
  return sol;
}

// Margin of the flow-angle-decrease condition along an integrated solution;
// positive everywhere on the half-open arc means admissible.
inline double angle_decrease_margin(const CharacteristicSolution& sol, const CharacteristicInit& init,
                                    double lambda, const GasModel& m) {
  const double sb = sol.sin_omega.front();
  const double span = 1.0 - sb;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < sol.y.size(); ++i) {
    const double s = sol.sin_omega[i];
    const double p = init.p_b * (1.0 + lambda * (s - sb) / span);
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double alpha = sol.theta[i] + std::atan2(s, cw);
    const double lhs = m.h0 * g_from_sin2(s * s, m) / std::sin(alpha);
    const double rhs = p / (2.0 * s * (m.kappa + s * s));
    worst = std::min(worst, rhs - lhs);
  }
  return worst;
}

}  // namespace detail

// Build an admissible boundary pair.  The streamline uses a linear flow-angle
// profile (concave arc) and a linear Mach-angle profile; the characteristic
// arc is integrated from corner values fixed by the corner derivative
// compatibility, steepening the Mach-angle profile (shooting parameter
// lambda) until the flow-angle-decrease condition holds with margin.  Throws
// ConstructionFailed with the admissible H0 ceiling when no profile works.
inline CanonicalBoundary construct_canonical_boundary(const CanonicalParams& prm) {
  const GasModel m = GasModel::make(prm.gamma, prm.h0);
  if (!(prm.omega_b >= 0.25 * kPi && prm.omega_b < 0.5 * kPi))
    fail(errc::invalid_config, "corner Mach angle must lie in [pi/4, pi/2)");
  if (!(prm.theta_c > 0.0 && prm.theta_c < 0.25 * kPi))
    fail(errc::invalid_config, "sonic-point flow angle must lie in (0, pi/4)");
  if (prm.n_samples < 64) fail(errc::invalid_config, "need at least 64 boundary samples");
  if (!(prm.x2 > prm.x1)) fail(errc::invalid_config, "x2 must exceed x1");

  const double L = prm.x2 - prm.x1;
  const double swb = std::sin(prm.omega_b);
  const double cwb = std::cos(prm.omega_b);
  // Slope-compatibility needs theta' more negative than the Mach-angle decay
  // term everywhere; the worst case sits at the corner.
  const double drop_needed = cwb * (1.0 - swb) / (m.kappa + swb * swb);
  const double theta_b = prm.theta_c - 1.35 * drop_needed;
  if (!(theta_b > 0.015))
    fail(errc::construction_failed,
         "streamline flow-angle drop exceeds theta_c; raise theta_c above " +
             std::to_string(1.35 * drop_needed + 0.015));

  CanonicalBoundary out;
  const int n = prm.n_samples;
  const double b = (theta_b - prm.theta_c) / L;  // d theta / dx, negative
  auto& sl = out.streamline;
  sl.x.resize(n);
  sl.phi.resize(n);
  sl.phi1.resize(n);
  sl.phi2.resize(n);
  sl.sin_omega.resize(n);
  sl.d_sin_omega.resize(n);
  const double c0 = std::log(std::cos(prm.theta_c));
  for (int i = 0; i < n; ++i) {
    const double x = prm.x1 + L * i / double(n - 1);
    const double th = prm.theta_c + b * (x - prm.x1);
    sl.x[i] = x;
    sl.phi1[i] = std::tan(th);
    sl.phi[i] = -(std::log(std::cos(th)) - c0) / b;  // integral of tan(theta)
    sl.phi2[i] = b / sqr(std::cos(th));
    sl.sin_omega[i] = 1.0 + (swb - 1.0) * (x - prm.x1) / L;
    sl.d_sin_omega[i] = (swb - 1.0) / L;
  }
  sl.sin_omega.front() = 1.0;
  sl.sin_omega.back() = swb;
  sl.phi0_bound = std::tan(theta_b) * (1.0 - 1e-6);
  sl.phi1_bound = std::tan(prm.theta_c) * (1.0 + 1e-6);

  // Corner data for the characteristic arc.
  detail::CharacteristicInit init;
  init.theta_b = theta_b;
  init.omega_b = prm.omega_b;
  init.alpha_b = theta_b + prm.omega_b;
  init.y2 = sl.phi.back();
  init.x2 = prm.x2;
  const double compat_b = detail::streamline_compat(sl, n - 1, m);  // negative
  const double dtheta_dy_corner = std::cos(theta_b) * cwb * compat_b / std::sin(init.alpha_b);
  // The characteristic ODE at the corner fixes the Mach-angle slope there.
  init.p_b = (m.kappa + swb * swb) / cwb *
             (m.h0 * 2.0 * swb * cwb * detail::g_from_sin2(swb * swb, m) / std::sin(init.alpha_b) -
              dtheta_dy_corner);
  if (!(init.p_b > 0.0)) fail(errc::construction_failed, "corner Mach-angle slope is not positive");

  const int fine = 4096;
  const double need = 10.0 * detail::kStrictMargin;
  std::optional<detail::CharacteristicSolution> accepted;
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    detail::CharacteristicSolution sol = detail::integrate_characteristic(init, lambda, m, fine);
    if (detail::angle_decrease_margin(sol, init, lambda, m) > need) {
      accepted = std::move(sol);
      break;
    }
  }
  if (!accepted) {
    // Report the largest admissible H0 for this geometry by bisection.
    double lo = 0.0, hi = m.h0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const GasModel mm{m.gamma, m.kappa, mid};
      bool ok = false;
      for (double lambda : {0.0, 1.0, 4.0, 16.0}) {
        detail::CharacteristicSolution sol = detail::integrate_characteristic(init, lambda, mm, 1024);
        if (detail::angle_decrease_margin(sol, init, lambda, mm) > need) {
          ok = true;
          break;
        }
      }
      (ok ? lo : hi) = mid;
    }
    fail(errc::construction_failed,
         "flow-angle-decrease condition unattainable for H0 = " + std::to_string(m.h0) +
             "; largest admissible H0 here is about " + std::to_string(lo));
  }

  // Resample the fine solution uniformly in y.
  const auto& sol = *accepted;
  Pchip th_of_y(sol.y, sol.theta), sw_of_y(sol.y, sol.sin_omega), psi_of_y(sol.y, sol.psi);
  auto& ch = out.characteristic;
  const double y3 = sol.y.back();
  ch.y.resize(n);
  ch.psi.resize(n);
  ch.psi1.resize(n);
  ch.psi2.resize(n);
  ch.theta.resize(n);
  ch.sin_omega.resize(n);
  for (int j = 0; j < n; ++j) {
    const double y = init.y2 + (y3 - init.y2) * j / double(n - 1);
    ch.y[j] = y;
    ch.theta[j] = th_of_y(y);
    ch.sin_omega[j] = std::clamp(sw_of_y(y), 0.0, 1.0);
    ch.psi[j] = psi_of_y(y);
    const double s = ch.sin_omega[j];
    const double cw = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double alpha = ch.theta[j] + std::atan2(s, cw);
    ch.psi1[j] = std::cos(alpha) / std::sin(alpha);
  }
  ch.theta.front() = theta_b;
  ch.sin_omega.front() = swb;
  ch.psi.front() = prm.x2;
  ch.sin_omega.back() = 1.0;
  // The Mach-angle slope in y diverges at the sonic tip, so psi'' is sampled
  // by differences of the stored slopes rather than the analytic form.
  ch.psi2 = fd_derivative(ch.y, ch.psi1);
  ch.psi1_bound = 0.0;
  for (int j = 0; j < n; ++j) ch.psi1_bound = std::max(ch.psi1_bound, std::abs(ch.psi1[j]));
  ch.psi1_bound *= 1.0 + 1e-6;

  return out;
}

}  // namespace ssp
