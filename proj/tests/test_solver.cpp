#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssp/solver.hpp"

using namespace ssp;

namespace {

const GasModel kAir = GasModel::make(1.4, 0.0);

CharNode make_node(double x, double y, double theta, double omega, const GasModel& m,
                   double omega_sb = 0.0) {
  CharNode n;
  n.x = x;
  n.y = y;
  n.theta = theta;
  n.sin_omega = std::sin(omega);
  n.cos_omega = std::cos(omega);
  n.omega_sb = omega_sb;
  n.xi = xi_of_omega(omega, m) - omega_sb;
  n.flags = nodeflag::kInterior;
  return n;
}

SolverConfig config(int n, double eps = 1e-2) {
  SolverConfig cfg;
  cfg.n_bc = n;
  cfg.n_ba = n;
  cfg.eps_min = eps;
  return cfg;
}

CanonicalBoundary canonical(double h0) {
  CanonicalParams p;
  p.h0 = h0;
  p.n_samples = 513;
  return construct_canonical_boundary(p);
}

// Exact centered simple wave: states constant on straight minus-family rays
// through the origin; the flow angle solves d(theta)/d(omega) =
// -cos^2(w)/(kappa+sin^2 w) across rays.  Integrated at high resolution with
// RK4, independent of the solver's update.
struct FanSolution {
  double omega0, theta0;
  const GasModel* m;

  double theta_of(double omega) const {
    const int steps = 4000;
    const double h = (omega - omega0) / steps;
    double th = theta0, w = omega0;
    auto f = [&](double ww) { return -sqr(std::cos(ww)) / (m->kappa + sqr(std::sin(ww))); };
    for (int i = 0; i < steps; ++i) {
      const double k1 = f(w), k2 = f(w + 0.5 * h), k3 = k2, k4 = f(w + h);
      th += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      w += h;
    }
    return th;
  }

  CharNode node_on_ray(double omega, double r, const GasModel& gm) const {
    const double th = theta_of(omega);
    const double beta = th - omega;
    // rays extend opposite the minus-characteristic direction
    return make_node(-r * std::cos(beta), -r * std::sin(beta), th, omega, gm);
  }
};

}  // namespace

TEST_CASE("constant state is exact") {
  const SolverConfig cfg = config(65);
  const CharNode L = make_node(0.0, 0.0, 0.0, kPi / 6.0, kAir);
  const CharNode R = make_node(1.0, 0.0, 0.0, kPi / 6.0, kAir);
  const CharNode P = interior_node(L, R, kAir, cfg);
  CHECK(P.x == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(P.y == doctest::Approx(0.288675134594813).epsilon(1e-12));
  CHECK(P.theta == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(P.sin_omega == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(P.xi == doctest::Approx(L.xi).epsilon(1e-13));
  CHECK(P.omega_sb == 0.0);
}

TEST_CASE("sonic threshold sets the flag without erroring") {
  const SolverConfig cfg = config(65, 5e-2);
  const double w = 0.5 * kPi - 0.04;  // cos(omega) below eps_min
  const CharNode L = make_node(0.0, 0.0, 0.0, w, kAir);
  const CharNode R = make_node(0.05, 0.0, 0.0, w, kAir);
  const CharNode P = interior_node(L, R, kAir, cfg);
  CHECK(P.has(nodeflag::kNearSonic));
  CHECK(P.cos_omega < cfg.eps_min);
}

TEST_CASE("reversed parents fold the cell") {
  const SolverConfig cfg = config(65);
  const CharNode L = make_node(1.0, 0.0, 0.0, kPi / 6.0, kAir);
  const CharNode R = make_node(0.0, 0.0, 0.0, kPi / 6.0, kAir);
  CHECK_THROWS_AS(interior_node(L, R, kAir, cfg), Error);
}

TEST_CASE("simple-wave cell update converges at third order locally") {
  const FanSolution fan{0.7, 0.25, &kAir};
  const SolverConfig cfg = config(65, 1e-3);

  auto cell_error = [&](double d) {
    const CharNode R = fan.node_on_ray(0.8, 1.0, kAir);
    const CharNode L = fan.node_on_ray(0.8 + d, 1.0, kAir);
    const CharNode P = interior_node(L, R, kAir, cfg);
    // the child lies on R's ray, where the exact state is R's state
    const double et = std::abs(P.theta - R.theta);
    const double ex = std::abs(P.xi - R.xi);
    // and it must sit on that ray through the origin
    const double beta = R.theta - std::atan2(R.sin_omega, R.cos_omega);
    const double off = std::abs(P.x * std::sin(beta) - P.y * std::cos(beta));
    CHECK(off < 5e-4 * d);  // ray alignment to discretization accuracy
    return et + ex;
  };

  const double e1 = cell_error(0.04);
  const double e2 = cell_error(0.02);
  const double e3 = cell_error(0.01);
  CHECK(e1 / e2 > 6.0);  // third-order local truncation
  CHECK(e2 / e3 > 6.0);
  CHECK(e1 / e2 < 12.0);
  CHECK(e2 / e3 < 12.0);
}

TEST_CASE("march on the canonical family") {
  const CanonicalBoundary b = canonical(0.0);
  const SolverConfig cfg = config(65, 1.2e-2);
  CharGrid g = goursat_march(b.streamline, b.characteristic, kAir, cfg);
  CHECK(g.size() > 1000);

  int interior = 0;
  for (const CharNode& n : g.nodes) {
    // the invariant-combination identity holds at every node
    const double xi_w = detail::xi_from_sin2(sqr(n.sin_omega), kAir);
    CHECK(std::abs(n.xi + n.omega_sb - xi_w) < 1e-10);
    if (!n.has(nodeflag::kInterior) || n.has(nodeflag::kInserted)) continue;
    if (n.left_parent < 0 || n.right_parent < 0) continue;
    ++interior;
    const CharNode& L = g.at(n.left_parent);
    const CharNode& R = g.at(n.right_parent);
    // admissible sign pattern of the discrete derivatives
    CHECK(n.theta - L.theta < 0.0);
    CHECK(R.theta - n.theta < 0.0);
    CHECK(n.sin_omega - L.sin_omega > 0.0);
    CHECK(R.sin_omega - n.sin_omega > 0.0);
    CHECK(n.dxi_plus > 0.0);
    CHECK(n.dxi_minus < 0.0);
  }
  CHECK(interior > 500);

  // cos(omega) decreases along every plus-family line
  for (const auto& ln : g.lines) {
    for (std::size_t k = 1; k < ln.size(); ++k)
      CHECK(g.at(ln[k]).cos_omega < g.at(ln[k - 1]).cos_omega + 1e-14);
  }

  // with zero swirl the transported combination stays exactly constant
  for (const CharNode& n : g.nodes) CHECK(n.omega_sb == 0.0);
}

TEST_CASE("inadmissible data is rejected before marching") {
  const CanonicalBoundary b = canonical(0.0);
  StreamlineBoundary bad = b.streamline;
  for (std::size_t i = 0; i < bad.size(); ++i) bad.phi2[i] *= 0.02;  // slope compatibility broken
  try {
    goursat_march(bad, b.characteristic, kAir, config(65));
    FAIL("expected InadmissibleBoundary");
  } catch (const Error& e) {
    CHECK(e.code() == errc::inadmissible_boundary);
    CHECK(std::string(e.what()).find("streamline-slope-compatibility") != std::string::npos);
  }
}

TEST_CASE("near-sonic refinement") {
  const CanonicalBoundary b = canonical(0.0);
  const SolverConfig cfg_base = config(65, 1e-2);
  const CharGrid base = goursat_march(b.streamline, b.characteristic, kAir, cfg_base);

  SUBCASE("fronts nest with the stop threshold") {
    const CharGrid gs = refine_near_sonic(base, b.streamline, b.characteristic, kAir, config(65, 4e-2));
    const CharGrid gd = refine_near_sonic(base, b.streamline, b.characteristic, kAir, config(65, 1e-2));
    double shallow_min = 1.0, deep_max = 0.0;
    auto tips = [](const CharGrid& g, auto&& f) {
      for (const auto& ln : g.lines) {
        if (ln.empty()) continue;
        const CharNode& t = g.at(ln.back());
        if (t.has(nodeflag::kNearSonic) && t.gen > 0) f(t);
      }
    };
    tips(gs, [&](const CharNode& t) { shallow_min = std::min(shallow_min, t.cos_omega); });
    tips(gd, [&](const CharNode& t) { deep_max = std::max(deep_max, t.cos_omega); });
    CHECK(deep_max < shallow_min);
    CHECK(gd.min_tip_cos() < 1e-2);
  }

  SUBCASE("locality: the refinement only appends") {
    const CharGrid gd = refine_near_sonic(base, b.streamline, b.characteristic, kAir, cfg_base);
    REQUIRE(gd.size() > base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      const CharNode& nb = base.nodes[i];
      const CharNode& nr = gd.nodes[i];
      CHECK(nb.x == nr.x);
      CHECK(nb.y == nr.y);
      CHECK(nb.theta == nr.theta);
      CHECK(nb.xi == nr.xi);
      CHECK(nb.line == nr.line);
    }
  }

  SUBCASE("step-shrink exponent reduces per-step jumps of the derivative field") {
    SolverConfig f2 = config(65, 1e-2);
    f2.refine_factor = 2.0;
    SolverConfig f0 = config(65, 1e-2);
    f0.refine_factor = 0.0;
    const CharGrid g2 = refine_near_sonic(base, b.streamline, b.characteristic, kAir, f2);
    const CharGrid g0 = refine_near_sonic(base, b.streamline, b.characteristic, kAir, f0);
    auto jump_metric = [&](const CharGrid& g) {
      double worst = 0.0;
      for (const CharNode& n : g.nodes) {
        if (n.left_parent < 0 || n.cos_omega > 0.5 * g.eps0) continue;
        const CharNode& L = g.at(n.left_parent);
        if (std::isfinite(L.dxi_plus) && std::isfinite(n.dxi_plus))
          worst = std::max(worst, std::abs(n.dxi_plus - L.dxi_plus));
      }
      return worst;
    };
    CHECK(jump_metric(g2) < 0.8 * jump_metric(g0));
    CHECK(g2.min_tip_cos() < 1e-2);
    CHECK(g0.min_tip_cos() < 1e-2);
  }
}

TEST_CASE("sonic extrapolation on an exactly-affine fixture") {
  // Build a synthetic grid where (pi/2 - omega)^2 is exactly affine in the
  // position along each line; the extrapolated sonic position is then exact.
  CharGrid g;
  g.model = kAir;
  g.cfg = config(65, 1e-2);
  const double a = 0.02, bcoef = 0.04;  // z = a - b x, sonic at x = 0.5
  for (int line = 0; line < 3; ++line) {
    g.lines.emplace_back();
    g.order.push_back(line);
    for (int k = 0; k < 5; ++k) {
      const double x = 0.1 * k;
      const double z = a - bcoef * x;
      const double eps_ang = std::sqrt(z);
      CharNode n;
      n.x = x;
      n.y = 0.1 * line;
      n.theta = 0.3 - 0.01 * x;
      n.sin_omega = std::cos(eps_ang);
      n.cos_omega = std::sin(eps_ang);
      n.dxi_plus = 0.4;
      n.dxi_minus = -0.4 + 1.5 * n.cos_omega;  // W = 1.5 exactly
      n.flags = std::uint8_t(nodeflag::kInterior | (k == 4 ? nodeflag::kNearSonic : 0));
      detail::push_node(g, n, line, k);
    }
  }
  const SonicCurve c = extrapolate_sonic_curve(g, kAir);
  REQUIRE(c.points.size() == 3);
  for (const SonicPoint& p : c.points) {
    CHECK(p.x == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(p.w == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(p.dxi_plus == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(p.levels >= 3);
    CHECK(p.residual < 1e-12);
  }
}

TEST_CASE("insufficient depth is reported") {
  CharGrid g;
  g.model = kAir;
  g.cfg = config(65, 1e-2);
  g.lines.emplace_back();
  g.order.push_back(0);
  CharNode n = make_node(0, 0, 0.2, 1.2, kAir);
  detail::push_node(g, n, 0, 0);
  CHECK_THROWS_AS(extrapolate_sonic_curve(g, kAir), Error);
}

TEST_CASE("transported fields over the marched patch") {
  SUBCASE("zero swirl keeps entropy and Bernoulli exactly uniform") {
    const CanonicalBoundary b = canonical(0.0);
    CharGrid g = goursat_march(b.streamline, b.characteristic, kAir, config(49, 2e-2));
    g = refine_near_sonic(g, b.streamline, b.characteristic, kAir, config(49, 2e-2));
    track_entropy_bernoulli(g, b.characteristic, b.streamline);
    for (const CharNode& n : g.nodes) {
      CHECK(std::abs(n.S - 1.0) < 1e-10);
      CHECK(std::abs(n.B - 1.0) < 1e-10);
    }
  }

  SUBCASE("swirl case: combination increments match the quadrature oracle") {
    const GasModel m = GasModel::make(1.4, 0.05);
    const CanonicalBoundary b = canonical(0.05);
    CharGrid g = goursat_march(b.streamline, b.characteristic, m, config(49, 2e-2));
    track_entropy_bernoulli(g, b.characteristic, b.streamline);
    // the transported-combination increment along a plus-family line equals
    // the arc integral of H0 G to the scheme's order; compare against a
    // per-segment Simpson refinement of the same path integral
    int checked = 0;
    for (const auto& ln : g.lines) {
      if (ln.size() < 8) continue;
      double quad = 0.0;
      for (std::size_t k = 1; k < ln.size(); ++k) {
        const CharNode& A = g.at(ln[k - 1]);
        const CharNode& B = g.at(ln[k]);
        const double ds = dist({A.x, A.y}, {B.x, B.y});
        const double gA = g_of_omega(A.omega(), m), gB = g_of_omega(B.omega(), m);
        const double gM = g_of_omega(0.5 * (A.omega() + B.omega()), m);
        quad += m.h0 * ds / 6.0 * (gA + 4.0 * gM + gB);
      }
      const double inc = g.at(ln.back()).omega_sb - g.at(ln.front()).omega_sb;
      if (std::abs(inc) < 1e-6) continue;
      CHECK(inc == doctest::Approx(quad).epsilon(2e-3));
      ++checked;
    }
    CHECK(checked > 10);

    // entropy and Bernoulli vary but reproduce the combination identity
    for (const CharNode& n : g.nodes) {
      if (!std::isfinite(n.S)) continue;
      const double om = omega_from_entropy_bernoulli(n.S, n.B, m);
      CHECK(om == doctest::Approx(n.omega_sb).epsilon(1e-9));
    }
  }
}
