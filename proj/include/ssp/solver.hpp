#pragma once

// Characteristic-mesh construction of the patch solution.
//
// The mesh is marched from the streamline arc (Cauchy data: both angles
// given) and the characteristic arc (one-family data) toward the unknown
// sonic curve.  Each interior node sits at the intersection of the
// plus-characteristic ray from its left parent and the minus-characteristic
// ray from its right parent; its state solves the trapezoidal discretization
// of the invariant relations
//     d+theta + sin(2w) d+Xi = 0,      d-theta - sin(2w) d-Xi = 0,
// with the transported combination advanced by d+-Omega = +-H0 G(w).  The
// Mach angle never appears as a marched unknown: it is recovered from
// Xi + Omega through the exact inverse of the omega-map, which keeps the
// scheme well conditioned as cos(w) -> 0.
//
// Node indexing: every node lives on a plus-family polyline ("line") and
// carries a generation counter; fronts are the constant-generation polylines.
// New lines appear either as streamline seeds or as front subdivisions in the
// near-sonic band.  In the dumped mesh, i is the positional index of the line
// (0 at the characteristic arc) and j = generation - i, so the corner is
// (0,0), characteristic-arc nodes are (0, j>0) and streamline nodes (i, -i).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <cstdio>
#include <thread>
#include <vector>

#include "ssp/boundary.hpp"
#include "ssp/common.hpp"
#include "ssp/gas.hpp"
#include "ssp/interp.hpp"

namespace ssp {

struct SolverConfig {
  int n_bc = 129;              // streamline-arc sample count
  int n_ba = 129;              // characteristic-arc sample count
  double eps_min = 1e-2;       // stop threshold on cos(omega)
  double picard_tol = 1e-12;   // fixed-point tolerance per node
  int picard_max = 60;         // fixed-point iteration cap
  double refine_factor = 2.0;  // near-sonic step shrink exponent
  int workers = 1;             // front-level parallelism

  void validate() const {
    if (!(eps_min > 1e-6 && eps_min < 1e-1))
      fail(errc::invalid_config, "eps_min must lie in (1e-6, 1e-1)");
    if (!(picard_tol > 0.0 && picard_tol <= 1e-10))
      fail(errc::invalid_config, "picard_tol must be positive and at most 1e-10");
    if (picard_max < 4) fail(errc::invalid_config, "picard_max too small");
    if (n_bc < 9 || n_ba < 9) fail(errc::invalid_config, "boundary resolution too small");
    if (!(refine_factor >= 0.0 && refine_factor <= 4.0))
      fail(errc::invalid_config, "refine_factor must lie in [0, 4]");
    if (workers < 1 || workers > 256) fail(errc::invalid_config, "workers must lie in [1, 256]");
  }
};

namespace nodeflag {
inline constexpr std::uint8_t kBC = 1;         // on the streamline arc
inline constexpr std::uint8_t kBA = 2;         // on the characteristic arc
inline constexpr std::uint8_t kInterior = 4;
inline constexpr std::uint8_t kNearSonic = 8;  // marching stopped here
inline constexpr std::uint8_t kInserted = 16;  // front-subdivision seed
}  // namespace nodeflag

struct CharNode {
  double x = 0.0, y = 0.0;
  double theta = 0.0;
  double sin_omega = 1.0, cos_omega = 0.0;
  double xi = 0.0;        // quasi-invariant
  double omega_sb = 0.0;  // transported S/B combination
  double dxi_plus = std::numeric_limits<double>::quiet_NaN();
  double dxi_minus = std::numeric_limits<double>::quiet_NaN();
  double S = std::numeric_limits<double>::quiet_NaN();
  double B = std::numeric_limits<double>::quiet_NaN();
  std::uint8_t flags = 0;
  int line = -1, gen = -1;
  int left_parent = -1, right_parent = -1;  // plus- and minus-family mesh parents

  bool has(std::uint8_t f) const { return (flags & f) != 0; }
  double omega() const { return std::atan2(sin_omega, cos_omega); }
  AngleState angles() const { return AngleState{theta, omega()}; }
  double alpha() const { return theta + omega(); }
  double beta() const { return theta - omega(); }
};

struct FrontInfo {
  int gen = 0;
  int active = 0;
  double min_cos = 0.0;
  double mean_spacing = 0.0;
};

struct CharGrid {
  GasModel model;
  SolverConfig cfg;
  std::vector<CharNode> nodes;
  std::vector<std::vector<int>> lines;  // line id -> node ids in generation order
  std::vector<int> order;               // positional order of lines, arc side first
  std::vector<FrontInfo> fronts;
  double spacing0 = 0.0;  // front spacing at the end of the plain march
  double eps0 = 0.0;      // cos(omega) scale at the end of the plain march

  const CharNode& at(int id) const { return nodes[std::size_t(id)]; }
  CharNode& at(int id) { return nodes[std::size_t(id)]; }
  std::size_t size() const { return nodes.size(); }

  int tip(int line_id) const { return lines[std::size_t(line_id)].back(); }

  // Signed arc steps to the mesh parents.
  double splus(const CharNode& n) const {
    return n.left_parent < 0 ? std::numeric_limits<double>::quiet_NaN()
                             : dist({n.x, n.y}, {at(n.left_parent).x, at(n.left_parent).y});
  }
  double sminus(const CharNode& n) const {
    return n.right_parent < 0 ? std::numeric_limits<double>::quiet_NaN()
                              : dist({n.x, n.y}, {at(n.right_parent).x, at(n.right_parent).y});
  }
  double min_tip_cos() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& ln : lines)
      if (!ln.empty()) m = std::min(m, at(ln.back()).cos_omega);
    return m;
  }
};

struct SonicPoint {
  double x = 0.0, y = 0.0;
  double theta = 0.0;
  double tangent_angle = 0.0;
  double dxi_plus = 0.0, dxi_minus = 0.0;
  double w = 0.0;        // limit of (d+Xi + d-Xi)/cos(omega)
  double residual = 0.0; // extrapolation misfit
  int levels = 0;        // depth levels used by the fit
  int line = -1;
};

struct SonicCurve {
  std::vector<SonicPoint> points;  // ordered from the streamline end toward the arc end
};

namespace detail {

enum class ChildStatus { ok, crossed, folded, no_convergence };

struct ChildResult {
  ChildStatus status = ChildStatus::ok;
  CharNode node;
};

// One Massau cell: intersect the averaged-slope characteristic rays from the
// parents and solve the trapezoidal invariant relations for (theta, Xi).
inline ChildResult try_child(const CharNode& L, const CharNode& R, const GasModel& m,
                             const SolverConfig& cfg) {
  ChildResult res;
  CharNode P;
  P.theta = 0.5 * (L.theta + R.theta);
  P.xi = 0.5 * (L.xi + R.xi);
  P.omega_sb = 0.5 * (L.omega_sb + R.omega_sb);
  P.sin_omega = 0.5 * (L.sin_omega + R.sin_omega);
  P.cos_omega = 0.5 * (L.cos_omega + R.cos_omega);
  P.x = 0.5 * (L.x + R.x);
  P.y = 0.5 * (L.y + R.y);

  const double xim = m.xi_sonic();
  const double gL = detail::g_from_sin2(L.sin_omega * L.sin_omega, m);
  const double gR = detail::g_from_sin2(R.sin_omega * R.sin_omega, m);
  double splus = 0.0, sminus = 0.0;

  double err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.picard_max; ++it) {
    const double wP = std::atan2(P.sin_omega, P.cos_omega);
    const double alpha = 0.5 * (L.alpha() + (P.theta + wP));
    const double beta = 0.5 * (R.beta() + (P.theta - wP));
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double cb = std::cos(beta), sb = std::sin(beta);
    // Ray intersection: sa (x - xL) - ca (y - yL) = 0, sb (x - xR) - cb (y - yR) = 0.
    const double det = ca * sb - cb * sa;  // -sin(alpha - beta)
    if (std::abs(det) < 1e-300) {
      res.status = ChildStatus::folded;
      return res;
    }
    const double bL = sa * L.x - ca * L.y;
    const double bR = sb * R.x - cb * R.y;
    const double x = (ca * bR - cb * bL) / det;
    const double y = (sa * bR - sb * bL) / det;
    splus = (x - L.x) * ca + (y - L.y) * sa;
    sminus = (R.x - x) * cb + (R.y - y) * sb;
    if (!(splus > 0.0) || !(sminus > 0.0)) {
      res.status = ChildStatus::folded;
      return res;
    }
    // Trapezoidal invariant relations about the parent-mean state.
    const double mp = 0.5 * (2.0 * L.sin_omega * L.cos_omega + 2.0 * P.sin_omega * P.cos_omega);
    const double mm = 0.5 * (2.0 * R.sin_omega * R.cos_omega + 2.0 * P.sin_omega * P.cos_omega);
    const double thbar = 0.5 * (L.theta + R.theta), xibar = 0.5 * (L.xi + R.xi);
    const double bplus = (L.theta - thbar) + mp * (L.xi - xibar);
    const double bminus = (R.theta - thbar) - mm * (R.xi - xibar);
    const double dxi = (bplus - bminus) / (mp + mm);
    const double dth = bplus - mp * dxi;
    const double theta_new = thbar + dth;
    const double xi_new = xibar + dxi;
    // Transported combination, averaged over both incoming segments.
    const double gP = detail::g_from_sin2(P.sin_omega * P.sin_omega, m);
    const double om_new = 0.5 * ((L.omega_sb + m.h0 * 0.5 * (gL + gP) * splus) +
                                 (R.omega_sb + m.h0 * 0.5 * (gR + gP) * sminus));
    const double target = xi_new + om_new;
    if (target > xim - 1e-14) {
      res.status = ChildStatus::crossed;
      return res;
    }
    const SinCos sc = invert_xi_map_sincos(target, m);
    err = std::max({std::abs(theta_new - P.theta), std::abs(xi_new - P.xi), std::abs(x - P.x),
                    std::abs(y - P.y), std::abs(sc.sin_omega - P.sin_omega)});
    P.theta = theta_new;
    P.xi = xi_new;
    P.omega_sb = om_new;
    P.sin_omega = sc.sin_omega;
    P.cos_omega = sc.cos_omega;
    P.x = x;
    P.y = y;
    if (err < cfg.picard_tol) break;
  }
  if (!(err < 1e3 * cfg.picard_tol)) {
    res.status = ChildStatus::no_convergence;
    return res;
  }
  P.dxi_plus = (P.xi - L.xi) / splus;
  P.dxi_minus = (R.xi - P.xi) / sminus;
  P.flags = nodeflag::kInterior;
  if (P.cos_omega < cfg.eps_min) P.flags |= nodeflag::kNearSonic;
  res.node = P;
  return res;
}

}  // namespace detail

// Advance one Massau cell.  Throws FoldedMesh when the rays intersect behind
// a parent and NoConvergence when the fixed point stalls; a node past the
// stop threshold is returned with its near-sonic flag set rather than as an
// error, and a cell that would cross the sonic set is clamped onto it.
inline CharNode interior_node(const CharNode& left, const CharNode& right, const GasModel& m,
                              const SolverConfig& cfg) {
  detail::ChildResult r = detail::try_child(left, right, m, cfg);
  switch (r.status) {
    case detail::ChildStatus::ok:
      return r.node;
    case detail::ChildStatus::crossed: {
      // Sonic crossing: report the midpoint clamped onto the sonic set.
      CharNode P;
      P.theta = 0.5 * (left.theta + right.theta);
      P.omega_sb = 0.5 * (left.omega_sb + right.omega_sb);
      P.xi = m.xi_sonic() - P.omega_sb;
      P.sin_omega = 1.0;
      P.cos_omega = 0.0;
      P.x = 0.5 * (left.x + right.x);
      P.y = 0.5 * (left.y + right.y);
      P.flags = nodeflag::kInterior | nodeflag::kNearSonic;
      return P;
    }
    case detail::ChildStatus::folded:
      fail(errc::folded_mesh, "characteristic rays intersect behind a parent (step too large)");
    case detail::ChildStatus::no_convergence:
      fail(errc::no_convergence, "cell fixed-point iteration exceeded picard_max");
  }
  fail(errc::no_convergence, "unreachable");
}

namespace detail {

// Evaluators over the two boundary arcs, shared by seeding, refinement and
// the transported-field reconstruction.
struct BoundaryEval {
  GasModel m;
  Pchip phi, phi1, phi2, sw_bc, dsw_bc;           // streamline arc, over x
  Pchip psi, psi1, theta_ba, sw_ba, omsb_ba;      // characteristic arc, over y
  Pchip dtheta_ba, dsw_ba;                        // slopes of the arc data
  double x1, x2, y2, y3;

  static BoundaryEval make(const StreamlineBoundary& sb, const CharacteristicBoundary& cb,
                           const GasModel& m) {
    BoundaryEval ev{m,
                    Pchip(sb.x, sb.phi),
                    Pchip(sb.x, sb.phi1),
                    Pchip(sb.x, sb.phi2),
                    Pchip(sb.x, sb.sin_omega),
                    Pchip(sb.x, sb.d_sin_omega),
                    Pchip(cb.y, cb.psi),
                    Pchip(cb.y, cb.psi1),
                    Pchip(cb.y, cb.theta),
                    Pchip(cb.y, cb.sin_omega),
                    Pchip({0.0, 1.0}, {0.0, 0.0}),  // replaced below
                    Pchip(cb.y, fd_derivative(cb.y, cb.theta)),
                    Pchip(cb.y, fd_derivative(cb.y, cb.sin_omega)),
                    sb.x1(),
                    sb.x2(),
                    cb.y2(),
                    cb.y3()};
    // Transported combination along the arc: Omega'(y) = H0 sqrt(1+psi'^2) G(w),
    // accumulated with Simpson quadrature on the interpolants (zero at the
    // corner by the S = B = 1 normalization there).
    std::vector<double> ys = cb.y, om(cb.y.size(), 0.0);
    auto integrand = [&](double y) {
      const double s = std::clamp(ev.sw_ba(y), 1e-12, 1.0);
      return m.h0 * std::hypot(1.0, ev.psi1(y)) * g_from_sin2(s * s, m);
    };
    for (std::size_t i = 1; i < ys.size(); ++i) {
      const double a = ys[i - 1], b = ys[i], mid = 0.5 * (a + b);
      om[i] = om[i - 1] + (b - a) / 6.0 * (integrand(a) + 4.0 * integrand(mid) + integrand(b));
    }
    ev.omsb_ba = Pchip(ys, om);
    return ev;
  }

  CharNode bc_node(double x) const {
    CharNode n;
    n.x = x;
    n.y = phi(x);
    n.theta = std::atan(phi1(x));
    n.sin_omega = std::clamp(sw_bc(x), 0.0, 1.0);
    n.cos_omega = std::sqrt(std::max(0.0, 1.0 - n.sin_omega * n.sin_omega));
    n.omega_sb = 0.0;
    n.xi = xi_from_sin2(std::max(n.sin_omega * n.sin_omega, 1e-300), m) - n.omega_sb;
    const double thp = phi2(x) / (1.0 + sqr(phi1(x)));
    const double d0th = std::cos(n.theta) * thp;
    const double d0sw = std::cos(n.theta) * dsw_bc(x);
    const double ks = m.kappa + sqr(n.sin_omega);
    n.dxi_plus = -d0th / (2.0 * n.sin_omega) + n.cos_omega * d0sw / (2.0 * n.sin_omega * ks);
    n.dxi_minus = d0th / (2.0 * n.sin_omega) + n.cos_omega * d0sw / (2.0 * n.sin_omega * ks);
    n.S = 1.0;
    n.B = 1.0;
    n.flags = nodeflag::kBC;
    return n;
  }

  CharNode ba_node(double y) const {
    CharNode n;
    n.x = psi(y);
    n.y = y;
    n.theta = theta_ba(y);
    n.sin_omega = std::clamp(sw_ba(y), 0.0, 1.0);
    n.cos_omega = std::sqrt(std::max(0.0, 1.0 - n.sin_omega * n.sin_omega));
    n.omega_sb = omsb_ba(y);
    n.xi = xi_from_sin2(std::max(n.sin_omega * n.sin_omega, 1e-300), m) - n.omega_sb;
    const double alpha = n.theta + n.omega();
    const double ks = m.kappa + sqr(n.sin_omega);
    n.dxi_plus = std::sin(alpha) * dsw_ba(y) / (2.0 * n.sin_omega * ks) -
                 m.h0 * g_from_sin2(sqr(n.sin_omega), m);
    n.B = bernoulli(y);
    n.S = entropy_from_omega_bernoulli(n.omega_sb, n.B, m);
    n.flags = nodeflag::kBA;
    return n;
  }

  // Transported values carried by the arc: the Bernoulli split takes half of
  // the combination, so both S and B vary when H0 > 0.
  double bernoulli(double y) const { return std::exp(-2.0 * m.kappa * omsb_ba(y)); }

  // Arc-length step along the characteristic arc mapped to the parameter.
  double dy_for_arc(double y, double ds) const { return ds / std::hypot(1.0, psi1(y)); }
};

struct FrontEntry {
  int node = -1;
  int line = -1;
  bool active = false;
};

struct MarchState {
  CharGrid* grid = nullptr;
  const BoundaryEval* ev = nullptr;
  std::vector<FrontEntry> front;  // positional order, characteristic arc first
  std::map<int, int> line_pos;    // line id -> positional rank key
  int gen = 0;
  double ba_tip_y = 0.0;          // last consumed arc parameter
  double ba_dy0 = 0.0;            // plain-march arc step
  bool ba_active = false;
  bool subdivide = false;
  double step_c = 0.0;            // spacing target scale for subdivision
};

inline int push_node(CharGrid& g, CharNode n, int line, int gen) {
  n.line = line;
  n.gen = gen;
  const int id = int(g.nodes.size());
  g.nodes.push_back(n);
  g.lines[std::size_t(line)].push_back(id);
  return id;
}

inline int new_line(CharGrid& g) {
  g.lines.emplace_back();
  return int(g.lines.size()) - 1;
}

// Positional ranks are kept as a vector of line ids; insertion splices.
inline void insert_after(std::vector<int>& order, int after_line, int line) {
  auto it = std::find(order.begin(), order.end(), after_line);
  order.insert(it + 1, line);
}

inline double front_spacing(const CharGrid& g, const std::vector<FrontEntry>& front) {
  double acc = 0.0;
  int cnt = 0;
  for (std::size_t k = 0; k + 1 < front.size(); ++k) {
    acc += dist({g.at(front[k].node).x, g.at(front[k].node).y},
                {g.at(front[k + 1].node).x, g.at(front[k + 1].node).y});
    ++cnt;
  }
  return cnt ? acc / cnt : 0.0;
}

// Allowed spacing for a pair in the subdivision band: the configured
// power-law target, capped by the overshoot predictor which keeps the
// relative drop of cos(omega) per step below a fixed fraction.
inline double allowed_spacing(const CharGrid& g, const CharNode& L, const CharNode& R,
                              const MarchState& st) {
  const GasModel& m = g.model;
  const double eps = std::min(L.cos_omega, R.cos_omega);
  const double f = (1.0 - eps * eps) * (m.kappa + 1.0 - eps * eps);
  double ubar = std::max(L.dxi_plus, R.dxi_plus);
  if (!std::isfinite(ubar)) ubar = 0.0;
  ubar += m.h0 * g_from_sin2(1.0 - eps * eps, m);
  ubar = std::max(ubar, 1e-6);
  const double drop_cap = 0.45 * eps * eps / (2.0 * f * ubar);
  const double power_cap = st.step_c * std::pow(eps, g.cfg.refine_factor);
  return std::max(1e-300, std::min(drop_cap, power_cap));
}

inline CharNode midpoint_seed(const CharNode& L, const CharNode& R, const GasModel& m) {
  CharNode n;
  n.x = 0.5 * (L.x + R.x);
  n.y = 0.5 * (L.y + R.y);
  n.theta = 0.5 * (L.theta + R.theta);
  n.xi = 0.5 * (L.xi + R.xi);
  n.omega_sb = 0.5 * (L.omega_sb + R.omega_sb);
  const SinCos sc = invert_xi_map_sincos(std::min(n.xi + n.omega_sb, m.xi_sonic()), m);
  n.sin_omega = sc.sin_omega;
  n.cos_omega = sc.cos_omega;
  auto mid = [](double a, double b) {
    if (std::isfinite(a) && std::isfinite(b)) return 0.5 * (a + b);
    return std::isfinite(a) ? a : b;
  };
  n.dxi_plus = mid(L.dxi_plus, R.dxi_plus);
  n.dxi_minus = mid(L.dxi_minus, R.dxi_minus);
  n.flags = nodeflag::kInterior | nodeflag::kInserted;
  return n;
}

template <class F>
inline void parallel_for(int n, int workers, F&& body) {
  if (workers <= 1 || n < 2 * workers) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// March generations until no active pair remains.  In subdivision mode the
// front is densified so the advance toward the sonic set follows the
// configured power law; otherwise a pair that would overshoot simply stops
// its left line.
inline void march(MarchState& st) {
  CharGrid& g = *st.grid;
  const SolverConfig& cfg = g.cfg;
  const double domain_scale = std::max(st.ev->x2 - st.ev->x1, st.ev->y3 - st.ev->y2);

  while (true) {
    auto& front = st.front;
    // Drop entries that reached the stop threshold; they stay recorded as tips.
    for (auto& e : front)
      if (e.active && g.at(e.node).cos_omega < cfg.eps_min) {
        g.at(e.node).flags |= nodeflag::kNearSonic;
        e.active = false;
      }

    if (st.subdivide) {
      // Densify until every active pair satisfies its spacing target.
      for (int pass = 0; pass < 64; ++pass) {
        bool changed = false;
        std::vector<FrontEntry> next;
        next.reserve(front.size() * 2);
        for (std::size_t k = 0; k < front.size(); ++k) {
          next.push_back(front[k]);
          if (k + 1 >= front.size() || !front[k].active || !front[k + 1].active) continue;
          const CharNode& R = g.at(front[k].node);
          const CharNode& L = g.at(front[k + 1].node);
          const double w = dist({R.x, R.y}, {L.x, L.y});
          if (w <= allowed_spacing(g, L, R, st)) continue;
          if (w < 1e-14 * domain_scale)
            fail(errc::step_underflow, "required near-sonic step below 1e-14 of the domain scale");
          CharNode mid = midpoint_seed(L, R, g.model);
          const int line = new_line(g);
          insert_after(g.order, R.line, line);
          const int id = push_node(g, mid, line, st.gen);
          next.push_back(FrontEntry{id, line, mid.cos_omega >= cfg.eps_min});
          if (mid.cos_omega < cfg.eps_min) g.at(id).flags |= nodeflag::kNearSonic;
          changed = true;
        }
        front = std::move(next);
        if (!changed) break;
      }
    }

    // Collect the active adjacent pairs; finished tips stay in the front as
    // separators so no pair ever bridges a finished region.
    struct Pair {
      int right_k, left_k;
    };
    std::vector<Pair> pairs;
    for (std::size_t k = 0; k + 1 < front.size(); ++k)
      if (front[k].active && front[k + 1].active) pairs.push_back({int(k), int(k + 1)});

    const bool extend_ba = st.ba_active && !front.empty() && front[0].line == 0 && front[0].active;
    if (pairs.empty() && !extend_ba) break;

    // Children, one per pair, independent across the front.
    std::vector<detail::ChildResult> results(pairs.size());
    parallel_for(int(pairs.size()), cfg.workers, [&](int i) {
      results[std::size_t(i)] = detail::try_child(g.at(front[std::size_t(pairs[std::size_t(i)].left_k)].node),
                                                  g.at(front[std::size_t(pairs[std::size_t(i)].right_k)].node),
                                                  g.model, cfg);
    });
    std::vector<int> pair_at(front.size(), -1);
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) pair_at[std::size_t(pairs[pi].right_k)] = int(pi);

    std::vector<FrontEntry> next_front;
    next_front.reserve(front.size() + 1);
    auto push_separator = [&](const FrontEntry& e) {
      // one inactive separator per run boundary is enough
      if (!next_front.empty() && !next_front.back().active) return;
      next_front.push_back(FrontEntry{e.node, e.line, false});
    };

    // Advance the characteristic-arc supply first so the new front keeps its
    // positional order.
    if (extend_ba) {
      const double ds_base = st.ba_dy0 * std::hypot(1.0, st.ev->psi1(st.ba_tip_y));
      const double ds = st.subdivide
                            ? std::min(ds_base, allowed_spacing(g, g.at(front[0].node), g.at(front[0].node), st))
                            : ds_base;
      double y_next = st.ba_tip_y + st.ev->dy_for_arc(st.ba_tip_y, ds);
      if (y_next >= st.ev->y3 - 1e-15 * (st.ev->y3 - st.ev->y2)) {
        st.ba_active = false;
      } else {
        CharNode n = st.ev->ba_node(y_next);
        const bool live = n.cos_omega >= cfg.eps_min;
        if (!live) n.flags |= nodeflag::kNearSonic;
        const int id = push_node(g, n, 0, st.gen + 1);
        g.at(id).left_parent = front[0].node;  // previous node along the arc
        next_front.push_back(FrontEntry{id, 0, live});
        st.ba_tip_y = y_next;
        if (!live) st.ba_active = false;
      }
    }

    for (std::size_t k = 0; k < front.size(); ++k) {
      if (!front[k].active) {
        push_separator(front[k]);
        continue;
      }
      // An active tip advances through the pair in which it is the left
      // element, handled while processing its right neighbor.  A tip whose
      // right neighbor is missing (run end, exhausted arc supply) is stuck
      // and carried forward as a separator.
      const bool extended = (k >= 1 && front[k - 1].active) ||
                            (k == 0 && !next_front.empty() && next_front[0].line == front[0].line);
      if (!extended) push_separator(front[k]);
      const int pi = pair_at[k];
      if (pi < 0) continue;
      const FrontEntry& fr = front[k];
      FrontEntry fl = front[std::size_t(pairs[std::size_t(pi)].left_k)];
      detail::ChildResult r = results[std::size_t(pi)];
      if (r.status != detail::ChildStatus::ok && st.subdivide) {
        // Halve the cell a few times before giving up on the pair.
        FrontEntry right = fr;
        for (int attempt = 0; attempt < 24 && r.status != detail::ChildStatus::ok; ++attempt) {
          const CharNode& R = g.at(right.node);
          const CharNode& L = g.at(fl.node);
          if (dist({R.x, R.y}, {L.x, L.y}) < 1e-14 * domain_scale) break;
          CharNode mid = midpoint_seed(L, R, g.model);
          const int line = new_line(g);
          insert_after(g.order, R.line, line);
          const int id = push_node(g, mid, line, st.gen);
          if (mid.cos_omega < cfg.eps_min) {
            g.at(id).flags |= nodeflag::kNearSonic;
            break;  // the inserted seed already reached the target depth
          }
          // child of (mid, right) extends the inserted line
          detail::ChildResult rm = detail::try_child(g.at(id), g.at(right.node), g.model, cfg);
          if (rm.status == detail::ChildStatus::ok) {
            const int cid = push_node(g, rm.node, line, st.gen + 1);
            g.at(cid).left_parent = id;
            g.at(cid).right_parent = right.node;
            next_front.push_back(FrontEntry{cid, line, !(rm.node.flags & nodeflag::kNearSonic)});
          }
          right = FrontEntry{id, line, true};
          r = detail::try_child(g.at(fl.node), g.at(right.node), g.model, cfg);
        }
        if (r.status == detail::ChildStatus::ok) {
          const int cid = push_node(g, r.node, fl.line, st.gen + 1);
          g.at(cid).left_parent = fl.node;
          g.at(cid).right_parent = right.node;
          next_front.push_back(FrontEntry{cid, fl.line, !(r.node.flags & nodeflag::kNearSonic)});
          continue;
        }
      }
      if (r.status == detail::ChildStatus::ok) {
        const int cid = push_node(g, r.node, fl.line, st.gen + 1);
        g.at(cid).left_parent = fl.node;
        g.at(cid).right_parent = fr.node;
        next_front.push_back(FrontEntry{cid, fl.line, !(r.node.flags & nodeflag::kNearSonic)});
      } else if (r.status == detail::ChildStatus::no_convergence) {
        fail(errc::no_convergence, "cell fixed-point stalled at generation " + std::to_string(st.gen) +
                                       " near x = " + std::to_string(g.at(fl.node).x));
      } else {
        // Overshoot or fold without subdivision: the left line stops here.
        g.at(fl.node).flags |= nodeflag::kNearSonic;
        push_separator(fl);
      }
    }

    ++st.gen;
#ifdef SSP_DEBUG_MARCH
    {
      double clo = 2.0, chi = -1.0;
      int act = 0;
      for (const auto& e : next_front)
        if (e.active) {
          ++act;
          clo = std::min(clo, g.at(e.node).cos_omega);
          chi = std::max(chi, g.at(e.node).cos_omega);
        }
      std::fprintf(stderr, "gen=%d front=%zu next=%zu act=%d nodes=%zu ba=%d cos=[%g,%g]\n", st.gen,
                   front.size(), next_front.size(), act, g.nodes.size(), int(st.ba_active), clo, chi);
    }
#endif
    FrontInfo info;
    info.gen = st.gen;
    double mc = std::numeric_limits<double>::infinity();
    for (const auto& e : next_front) {
      if (e.active) ++info.active;
      mc = std::min(mc, g.at(e.node).cos_omega);
    }
    info.min_cos = std::isfinite(mc) ? mc : 0.0;
    info.mean_spacing = front_spacing(g, next_front);
    g.fronts.push_back(info);
    front = std::move(next_front);
    if (front.empty()) break;
  }
}

// Sorts front entries into the stored positional order of their lines.
inline void sort_front(const CharGrid& g, std::vector<FrontEntry>& front) {
  std::vector<int> rank(g.lines.size(), -1);
  for (std::size_t k = 0; k < g.order.size(); ++k) rank[std::size_t(g.order[k])] = int(k);
  std::sort(front.begin(), front.end(),
            [&](const FrontEntry& a, const FrontEntry& b) { return rank[std::size_t(a.line)] < rank[std::size_t(b.line)]; });
}

}  // namespace detail

// Build the mesh from admissible boundary data.  The streamline arc carries
// Cauchy data (it is non-characteristic for the angle system) and seeds the
// plus-family lines; the characteristic arc supplies the right edge one node
// per generation.  Marching stops per line at the cos(omega) threshold or
// when the cell step would cross the sonic set.
inline CharGrid goursat_march(const StreamlineBoundary& sb, const CharacteristicBoundary& cb,
                              const GasModel& m, const SolverConfig& cfg) {
  cfg.validate();
  {
    const BoundaryValidationReport rs = validate_streamline(sb, m);
    const BoundaryValidationReport rc = validate_characteristic(cb, m);
    const BoundaryValidationReport rk = validate_corner(sb, cb, m);
    std::string why;
    for (const auto* rep : {&rs, &rc, &rk})
      for (const auto& c : rep->conditions)
        if (!c.pass) why += (why.empty() ? "" : "; ") + c.id;
    if (!why.empty()) fail(errc::inadmissible_boundary, "boundary data rejected: " + why);
  }

  CharGrid g;
  g.model = m;
  g.cfg = cfg;
  const detail::BoundaryEval ev = detail::BoundaryEval::make(sb, cb, m);

  detail::MarchState st;
  st.grid = &g;
  st.ev = &ev;
  st.subdivide = false;

  // Line 0 is the characteristic arc; lines 1..n_bc-1 start on the streamline,
  // ordered corner-first so positional order runs from the arc toward the
  // sonic end of the streamline.
  detail::new_line(g);
  g.order.push_back(0);
  const double hx = (ev.x2 - ev.x1) / double(cfg.n_bc - 1);
  st.front.clear();
  {
    CharNode corner = ev.bc_node(ev.x2);
    corner.flags |= nodeflag::kBA;
    // The corner belongs to both arcs; its plus-family derivative comes from
    // the arc data, consistent by the corner compatibility.
    const int id = detail::push_node(g, corner, 0, 0);
    st.front.push_back({id, 0, corner.cos_omega >= cfg.eps_min});
  }
  for (int i = 1; i < cfg.n_bc; ++i) {
    const double x = ev.x2 - hx * i;
    CharNode n = ev.bc_node(std::max(x, ev.x1));
    const int line = detail::new_line(g);
    g.order.push_back(line);
    const bool live = n.cos_omega >= cfg.eps_min;
    if (!live) n.flags |= nodeflag::kNearSonic;
    const int id = detail::push_node(g, n, line, 0);
    st.front.push_back({id, line, live});
  }
  st.ba_tip_y = ev.y2;
  st.ba_dy0 = (ev.y3 - ev.y2) / double(cfg.n_ba - 1);
  st.ba_active = true;
  st.gen = 0;

  detail::march(st);

  // Calibration scales for the near-sonic continuation.
  double eps_sum = 0.0;
  int cnt = 0;
  for (const auto& ln : g.lines) {
    if (ln.empty()) continue;
    const CharNode& t = g.at(ln.back());
    if (t.gen > 0) {
      eps_sum += t.cos_omega;
      ++cnt;
    }
  }
  g.eps0 = std::max(cnt ? eps_sum / cnt : cfg.eps_min, cfg.eps_min);
  g.spacing0 = hx * std::hypot(1.0, (sb.phi.back() - sb.phi.front()) / (ev.x2 - ev.x1));
  return g;
}

// Continue the march through the near-sonic band with front subdivision;
// steps shrink like cos(omega)^refine_factor.  The existing grid is only
// appended to: every stalled tip still above the stop threshold rejoins the
// front and deepens until it crosses it.  The restart front mixes tips of
// different generations; their children all receive one fresh generation, so
// the front re-synchronizes immediately.
inline CharGrid refine_near_sonic(const CharGrid& grid, const StreamlineBoundary& sb,
                                  const CharacteristicBoundary& cb, const GasModel& m,
                                  const SolverConfig& cfg) {
  CharGrid g = grid;
  g.cfg = cfg;

  detail::MarchState st;
  st.front.clear();
  int gmax = 0;
  for (std::size_t li = 0; li < g.lines.size(); ++li) {
    const auto& ln = g.lines[li];
    if (ln.empty()) continue;
    const CharNode& t = g.at(ln.back());
    if (t.gen == 0) continue;  // seeds that never marched stay out of the band
    if (t.cos_omega >= cfg.eps_min) {
      g.at(ln.back()).flags &= std::uint8_t(~nodeflag::kNearSonic);
      st.front.push_back({ln.back(), int(li), true});
      gmax = std::max(gmax, t.gen);
    }
  }
  if (st.front.size() < 2) return g;  // nothing to deepen
  detail::sort_front(g, st.front);

  const detail::BoundaryEval ev = detail::BoundaryEval::make(sb, cb, m);
  st.grid = &g;
  st.ev = &ev;
  st.subdivide = true;
  st.gen = gmax;
  st.step_c = std::max(g.spacing0, 1e-12) / std::pow(std::max(g.eps0, cfg.eps_min), cfg.refine_factor);

  // The arc supply continues from the last consumed parameter.
  st.ba_active = false;
  if (!g.lines[0].empty()) {
    const CharNode& tip = g.at(g.lines[0].back());
    st.ba_tip_y = tip.y;
    st.ba_dy0 = (ev.y3 - ev.y2) / double(cfg.n_ba - 1);
    st.ba_active = !st.front.empty() && st.front[0].line == 0;
  }

  detail::march(st);
  return g;
}

// Extrapolate each deep-enough line onto the sonic set: positions and
// invariant fields are affine in (pi/2 - omega)^2 to leading order, so a
// least-squares line in that variable evaluated at zero gives the limit.
inline SonicCurve extrapolate_sonic_curve(const CharGrid& grid, const GasModel& m) {
  SonicCurve curve;
  const double band = 3.0 * grid.cfg.eps_min;
  int candidates = 0;

  for (std::size_t pos = grid.order.size(); pos-- > 0;) {
    const auto& ln = grid.lines[std::size_t(grid.order[pos])];
    if (ln.size() < 3) continue;
    const CharNode& tip = grid.at(ln.back());
    if (!(tip.cos_omega < band)) continue;
    ++candidates;
    // last few distinct depth levels
    std::vector<const CharNode*> lv;
    for (std::size_t k = ln.size(); k-- > 0 && lv.size() < 6;) {
      const CharNode& n = grid.at(ln[k]);
      if (!std::isfinite(n.dxi_plus) || !std::isfinite(n.dxi_minus)) continue;
      if (!lv.empty() && !(n.cos_omega > lv.back()->cos_omega + 1e-15)) continue;
      if (n.cos_omega > band) break;
      lv.push_back(&n);
    }
    if (lv.size() < 3) continue;

    auto fit0 = [&](auto field, double* resid) {
      // least squares of field against z = (pi/2 - omega)^2, value at z = 0
      double sz = 0, szz = 0, sf = 0, szf = 0;
      const double n = double(lv.size());
      for (const CharNode* p : lv) {
        const double z = sqr(std::atan2(p->cos_omega, p->sin_omega));
        const double f = field(*p);
        sz += z;
        szz += z * z;
        sf += f;
        szf += z * f;
      }
      const double det = n * szz - sz * sz;
      const double slope = (n * szf - sz * sf) / det;
      const double icept = (sf - slope * sz) / n;
      double r = 0.0;
      for (const CharNode* p : lv) {
        const double z = sqr(std::atan2(p->cos_omega, p->sin_omega));
        r = std::max(r, std::abs(field(*p) - (icept + slope * z)));
      }
      if (resid) *resid = std::max(*resid, r);
      return icept;
    };

    SonicPoint sp;
    sp.levels = int(lv.size());
    sp.line = grid.order[pos];
    sp.residual = 0.0;
    sp.x = fit0([](const CharNode& n) { return n.x; }, &sp.residual);
    sp.y = fit0([](const CharNode& n) { return n.y; }, &sp.residual);
    sp.theta = fit0([](const CharNode& n) { return n.theta; }, nullptr);
    sp.dxi_plus = fit0([](const CharNode& n) { return n.dxi_plus; }, nullptr);
    sp.dxi_minus = fit0([](const CharNode& n) { return n.dxi_minus; }, nullptr);
    sp.w = fit0([](const CharNode& n) { return (n.dxi_plus + n.dxi_minus) / n.cos_omega; }, nullptr);
    curve.points.push_back(sp);
  }
  if (curve.points.size() < 2) {
    if (candidates > 0)
      fail(errc::insufficient_depth, "fewer than 3 depth levels available near the sonic set");
    fail(errc::insufficient_depth, "no line reached the near-sonic band");
  }

  // Tangent from the level-gradient of 1 - sin(omega), oriented along the
  // curve's sampling direction.
  const double gs = m.g_sonic();
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    SonicPoint& sp = curve.points[i];
    const double dXi = sp.dxi_plus - sp.dxi_minus + 2.0 * m.h0 * gs;
    const double lx = (m.kappa + 1.0) * (std::sin(sp.theta) * dXi - std::cos(sp.theta) * sp.w);
    const double ly = -(m.kappa + 1.0) * (std::cos(sp.theta) * dXi + std::sin(sp.theta) * sp.w);
    double tx = ly, ty = -lx;
    const SonicPoint& q = curve.points[i + 1 < curve.points.size() ? i + 1 : i - 1];
    double dx = q.x - sp.x, dy = q.y - sp.y;
    if (i + 1 >= curve.points.size()) {
      dx = -dx;
      dy = -dy;
    }
    if (tx * dx + ty * dy < 0.0) {
      tx = -tx;
      ty = -ty;
    }
    sp.tangent_angle = std::atan2(ty, tx);
  }
  return curve;
}

namespace detail {

// Triangulation of the marched region from the parent links: one "up"
// triangle per interior node with its two parents, plus one "down" triangle
// per adjacent child pair sharing a parent.
struct MeshTriangulation {
  struct Tri {
    int a, b, c;
  };
  std::vector<Tri> tris;
  std::vector<std::vector<int>> node_tris;  // node id -> incident triangles

  static MeshTriangulation make(const CharGrid& g) {
    MeshTriangulation t;
    t.node_tris.resize(g.size());
    std::map<int, int> by_left;  // plus-family predecessor -> successor (unique)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const CharNode& n = g.nodes[i];
      if (n.left_parent >= 0) by_left[n.left_parent] = int(i);
      if (n.left_parent >= 0 && n.right_parent >= 0) t.add(int(i), n.left_parent, n.right_parent);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      const CharNode& n = g.nodes[i];
      if (n.right_parent < 0) continue;
      auto it = by_left.find(n.right_parent);
      if (it != by_left.end()) t.add(int(i), it->second, n.right_parent);
    }
    return t;
  }

  void add(int a, int b, int c) {
    const int id = int(tris.size());
    tris.push_back({a, b, c});
    node_tris[std::size_t(a)].push_back(id);
    node_tris[std::size_t(b)].push_back(id);
    node_tris[std::size_t(c)].push_back(id);
  }
};

inline bool barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c, double* w) {
  const double d = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
  if (std::abs(d) < 1e-300) return false;
  w[0] = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / d;
  w[1] = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / d;
  w[2] = 1.0 - w[0] - w[1];
  const double tol = -1e-10;
  return w[0] >= tol && w[1] >= tol && w[2] >= tol;
}

}  // namespace detail

// Transported fields: trace the streamline through each node downstream to
// the characteristic arc (every streamline in the patch leaves through it),
// copy the Bernoulli value carried there, and recover the entropy from the
// node's own transported combination.
inline void track_entropy_bernoulli(CharGrid& g, const CharacteristicBoundary& cb,
                                    const StreamlineBoundary& sb) {
  const GasModel& m = g.model;
  const detail::BoundaryEval ev = detail::BoundaryEval::make(sb, cb, m);
  const detail::MeshTriangulation tri = detail::MeshTriangulation::make(g);

  // Characteristic-arc polyline (positional line 0), indexed by y for the
  // exit test.
  const auto& ba_ids = g.lines[0];
  std::vector<double> ba_y;
  ba_y.reserve(ba_ids.size());
  for (int id : ba_ids) ba_y.push_back(g.at(id).y);

  auto segment_exit = [&](const Vec2& p0, const Vec2& p1, double* y_exit) {
    const double pad = 2.0 * std::abs(p1.y - p0.y) + 1e-12;
    const double ylo = std::min(p0.y, p1.y) - pad, yhi = std::max(p0.y, p1.y) + pad;
    auto lo = std::lower_bound(ba_y.begin(), ba_y.end(), ylo);
    std::size_t k0 = lo == ba_y.begin() ? 0 : std::size_t(lo - ba_y.begin()) - 1;
    for (std::size_t k = k0; k + 1 < ba_ids.size() && ba_y[k] <= yhi; ++k) {
      const CharNode& a = g.at(ba_ids[k]);
      const CharNode& b = g.at(ba_ids[k + 1]);
      const double d1x = p1.x - p0.x, d1y = p1.y - p0.y;
      const double d2x = b.x - a.x, d2y = b.y - a.y;
      const double den = d1x * d2y - d1y * d2x;
      if (std::abs(den) < 1e-300) continue;
      const double t = ((a.x - p0.x) * d2y - (a.y - p0.y) * d2x) / den;
      const double u = ((a.x - p0.x) * d1y - (a.y - p0.y) * d1x) / den;
      if (t >= -1e-12 && t <= 1.0 + 1e-12 && u >= -1e-9 && u <= 1.0 + 1e-9) {
        *y_exit = a.y + u * (b.y - a.y);
        return true;
      }
    }
    return false;
  };

  // Ring search around an anchor node, reusing a stamp buffer across calls.
  std::vector<int> stamp(g.size(), -1);
  int epoch = 0;
  std::vector<int> ring, next_ring, cand;
  auto theta_at = [&](const Vec2& p, int* anchor) -> std::optional<double> {
    ++epoch;
    ring.assign(1, *anchor);
    stamp[std::size_t(*anchor)] = epoch;
    for (int depth = 0; depth < 4; ++depth) {
      cand.clear();
      next_ring.clear();
      for (int nid : ring) {
        for (int tid : tri.node_tris[std::size_t(nid)]) {
          cand.push_back(tid);
          const auto& tr = tri.tris[std::size_t(tid)];
          for (int corner : {tr.a, tr.b, tr.c}) {
            if (stamp[std::size_t(corner)] != epoch) {
              stamp[std::size_t(corner)] = epoch;
              next_ring.push_back(corner);
            }
          }
        }
      }
      for (int tid : cand) {
        const auto& tr = tri.tris[std::size_t(tid)];
        double w[3];
        const CharNode &A = g.at(tr.a), &B = g.at(tr.b), &C = g.at(tr.c);
        if (detail::barycentric(p, {A.x, A.y}, {B.x, B.y}, {C.x, C.y}, w)) {
          *anchor = tr.a;
          return w[0] * A.theta + w[1] * B.theta + w[2] * C.theta;
        }
      }
      std::swap(ring, next_ring);
      if (ring.empty()) break;
    }
    return std::nullopt;
  };

  for (std::size_t i = 0; i < g.size(); ++i) {
    CharNode& n = g.nodes[i];
    if (n.has(nodeflag::kBC) || n.has(nodeflag::kBA)) continue;  // carried by the arcs
    double h = 0.0;
    if (n.left_parent >= 0) h = std::max(h, g.splus(n));
    if (n.right_parent >= 0) h = std::max(h, g.sminus(n));
    if (!(h > 0.0)) h = 1e-3;
    Vec2 p{n.x, n.y};
    double th = n.theta;
    int anchor = int(i);
    double y_exit = 0.0;
    bool exited = false;
    for (int step = 0; step < 200000; ++step) {
      const double ds = 0.45 * h;
      // midpoint step along the flow direction
      Vec2 pm{p.x + 0.5 * ds * std::cos(th), p.y + 0.5 * ds * std::sin(th)};
      int anchor_m = anchor;
      std::optional<double> thm = theta_at(pm, &anchor_m);
      const double th_use = thm.value_or(th);
      Vec2 pn{p.x + ds * std::cos(th_use), p.y + ds * std::sin(th_use)};
      if (segment_exit(p, pn, &y_exit)) {
        exited = true;
        break;
      }
      int anchor_n = anchor_m;
      std::optional<double> thn = theta_at(pn, &anchor_n);
      if (!thn) {
        // The full step left the triangulated region: shorten it.  Near the
        // ragged sonic front a trace can graze coverage notches even though
        // its direction points into the domain.
        bool recovered = false;
        double frac = 0.5;
        for (int half = 0; half < 6 && !recovered; ++half, frac *= 0.5) {
          Vec2 ps{p.x + frac * ds * std::cos(th_use), p.y + frac * ds * std::sin(th_use)};
          anchor_n = anchor_m;
          if (segment_exit(p, ps, &y_exit)) {
            exited = true;
            recovered = true;
            pn = ps;
            break;
          }
          thn = theta_at(ps, &anchor_n);
          if (thn) {
            pn = ps;
            recovered = true;
          }
        }
        if (exited) break;
        if (!recovered) {
          // Grazing the streamline boundary or the corner counts as a corner
          // exit; anything else escaped through the sonic front.
          if (pn.y <= ev.phi(std::clamp(pn.x, ev.x1, ev.x2)) + 1e-9 || pn.x >= ev.x2 - 1e-9) {
            y_exit = ev.y2;
            exited = true;
            break;
          }
          fail(errc::trace_escaped_domain,
               "streamline trace from (" + std::to_string(n.x) + ", " + std::to_string(n.y) +
                   ") left the solved region near x = " + std::to_string(pn.x) +
                   ", y = " + std::to_string(pn.y));
        }
      }
      p = pn;
      th = *thn;
      anchor = anchor_n;
      const CharNode& an = g.at(anchor);
      double ha = 0.0;
      if (an.left_parent >= 0) ha = std::max(ha, g.splus(an));
      if (an.right_parent >= 0) ha = std::max(ha, g.sminus(an));
      if (ha > 0.0) h = ha;
    }
    if (!exited) fail(errc::trace_escaped_domain, "streamline trace did not terminate");
    n.B = ev.bernoulli(std::clamp(y_exit, ev.y2, ev.y3));
    n.S = entropy_from_omega_bernoulli(n.omega_sb, n.B, m);
  }
}

}  // namespace ssp
