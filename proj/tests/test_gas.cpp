#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ssp/gas.hpp"

using namespace ssp;

namespace {
const GasModel kAir = GasModel::make(1.4, 0.0);
}

TEST_CASE("characteristic slopes") {
  // symmetric state about theta = 0
  Slopes s = char_slopes({0.0, kPi / 6.0});
  CHECK(s.lambda_plus == doctest::Approx(0.57735026918962573).epsilon(1e-12));
  CHECK(s.lambda_minus == doctest::Approx(-0.57735026918962573).epsilon(1e-12));
  CHECK(s.lambda_zero == 0.0);

  // direct evaluation at theta = pi/8, omega = pi/4
  s = char_slopes({kPi / 8.0, kPi / 4.0});
  CHECK(s.lambda_plus == doctest::Approx(std::tan(3.0 * kPi / 8.0)).epsilon(1e-14));
  CHECK(s.lambda_minus == doctest::Approx(std::tan(-kPi / 8.0)).epsilon(1e-14));
  CHECK(s.lambda_zero == doctest::Approx(std::tan(kPi / 8.0)).epsilon(1e-14));

  // degenerate limits
  CHECK_THROWS_AS(char_slopes({0.0, 0.5 * kPi}), Error);
  CHECK_THROWS_AS(char_slopes({0.0, 0.5 * kPi - 1e-13}), Error);   // sonic tolerance
  CHECK_THROWS_AS(char_slopes({0.3, 0.5 * kPi - 0.3}), Error);     // alpha at pi/2 overflows
}

TEST_CASE("slope ordering holds on the supersonic range") {
  // The ordering tan(beta) < tan(theta) < tan(alpha) holds on the principal
  // branch, i.e. while both characteristic inclinations stay inside
  // (-pi/2, pi/2).
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> uth(-0.3, 0.3), uw(0.05, 1.45);
  int kept = 0;
  for (int i = 0; i < 3000 && kept < 1000; ++i) {
    AngleState st{uth(rng), uw(rng)};
    if (std::cos(st.alpha()) < 1e-6 || std::cos(st.beta()) < 1e-6) continue;
    ++kept;
    Slopes s = char_slopes(st);
    CHECK(s.lambda_plus > s.lambda_zero);
    CHECK(s.lambda_zero > s.lambda_minus);
  }
  CHECK(kept == 1000);
}

TEST_CASE("G of omega") {
  // sonic substitution: (1/1.2)^3 for kappa = 0.2
  CHECK(g_of_omega(0.5 * kPi, kAir) == doctest::Approx(0.578703703703703703).epsilon(1e-14));
  CHECK(g_of_omega(0.5 * kPi, kAir) == doctest::Approx(kAir.g_sonic()).epsilon(1e-15));
  // direct closed form at omega = pi/6: (0.25/0.45)^3
  CHECK(g_of_omega(kPi / 6.0, kAir) == doctest::Approx(0.17146776406035665).epsilon(1e-13));
  // zero limit
  CHECK(g_of_omega(1e-9, kAir) == doctest::Approx(0.0).epsilon(1e-30));
}

TEST_CASE("xi map and its inverse") {
  // direct evaluation at the sonic value: 1.25 ln(1/1.2)
  CHECK(xi_of_omega(0.5 * kPi, kAir) == doctest::Approx(-0.22790194599244327).epsilon(1e-14));
  // strictly increasing on ordered samples
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uw(0.05, 0.5 * kPi);
  for (int i = 0; i < 1000; ++i) {
    double a = uw(rng), b = uw(rng);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-12) continue;
    CHECK(xi_of_omega(a, kAir) < xi_of_omega(b, kAir));
    CHECK(g_of_omega(a, kAir) < g_of_omega(b, kAir));
  }
  // inverse identity
  for (double w : {kPi / 12.0, kPi / 6.0, kPi / 4.0, kPi / 3.0, 0.49 * kPi, 0.5 * kPi}) {
    CHECK(invert_xi_map(xi_of_omega(w, kAir), kAir) == doctest::Approx(w).epsilon(1e-12));
  }
  CHECK(invert_xi_map(-0.22790194599244327, kAir) == doctest::Approx(0.5 * kPi).epsilon(1e-9));
  // forward-map check of an arbitrary in-range preimage
  const double w = invert_xi_map(-0.25, kAir);
  CHECK(xi_of_omega(w, kAir) == doctest::Approx(-0.25).epsilon(1e-12));
  // beyond the sonic maximum (the supremum here is about -0.2279)
  CHECK_THROWS_AS(invert_xi_map(-0.22, kAir), Error);
  CHECK_THROWS_AS(invert_xi_map(-0.2, kAir), Error);
}

TEST_CASE("primitive reconstruction") {
  // sonic state with S = 1, B = 3, gamma = 1.4: q = c = 1, rho = (5/7)^2.5
  PrimitiveState ps = recover_primitives({0.0, 0.5 * kPi}, 1.0, 3.0, kAir);
  CHECK(ps.q == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ps.c == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ps.rho == doctest::Approx(std::pow(5.0 / 7.0, 2.5)).epsilon(1e-14));
  CHECK(ps.p == doctest::Approx(std::pow(5.0 / 7.0, 3.5)).epsilon(1e-14));
  CHECK(ps.u == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ps.v == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(kAir.gamma * ps.p / ps.rho == doctest::Approx(ps.c * ps.c).epsilon(1e-12));

  // round-trip of (S, B, theta, omega) across random supersonic states
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uth(-0.4, 0.4), uw(0.3, 0.5 * kPi), us(0.5, 2.0), ub(1.0, 5.0);
  for (int i = 0; i < 300; ++i) {
    const AngleState st{uth(rng), uw(rng)};
    const double S = us(rng), B = ub(rng);
    const PrimitiveState r = recover_primitives(st, S, B, kAir);
    CHECK(kAir.gamma * r.p / r.rho == doctest::Approx(r.c * r.c).epsilon(1e-12));
    const double S2 = r.p * std::pow(r.rho, -kAir.gamma);
    const double B2 = 0.5 * r.q * r.q + r.c * r.c / (kAir.gamma - 1.0);
    CHECK(S2 == doctest::Approx(S).epsilon(1e-10));
    CHECK(B2 == doctest::Approx(B).epsilon(1e-10));
    CHECK(std::atan2(r.v, r.u) == doctest::Approx(st.theta).epsilon(1e-12));
    CHECK(r.c / r.q == doctest::Approx(std::sin(st.omega)).epsilon(1e-12));
    CHECK(r.q >= r.c - 1e-12);
  }
  CHECK_THROWS_AS(recover_primitives({0.0, 0.5}, -1.0, 3.0, kAir), Error);
}

TEST_CASE("cartesian gradient conversion") {
  Gradient g = cartesian_gradients(0.0, 0.0, {0.1, 0.7});
  CHECK(g.fx == 0.0);
  CHECK(g.fy == 0.0);

  g = cartesian_gradients(1.0, 1.0, {0.0, kPi / 4.0});
  CHECK(g.fx == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(g.fy == doctest::Approx(0.0).epsilon(1e-14));

  CHECK_THROWS_AS(cartesian_gradients(1.0, 0.0, {0.0, 0.5 * kPi}), Error);

  // projection then conversion is the identity on arbitrary gradients
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0), uth(-0.5, 0.5), uw(0.2, 1.5);
  for (int i = 0; i < 500; ++i) {
    const AngleState st{uth(rng), uw(rng)};
    const Gradient in{u(rng), u(rng)};
    const Directional d = characteristic_derivatives(in, st);
    const Gradient back = cartesian_gradients(d.dplus, d.dminus, st);
    CHECK(back.fx == doctest::Approx(in.fx).epsilon(1e-10));
    CHECK(back.fy == doctest::Approx(in.fy).epsilon(1e-10));
    // the streamline projection is consistent with the +/- pair
    CHECK(d.dzero == doctest::Approx((d.dplus + d.dminus) / (2.0 * std::cos(st.omega))).epsilon(1e-10));
  }
}

TEST_CASE("entropy-Bernoulli combination") {
  const GasModel m = GasModel::make(1.4, 0.05);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> us(0.2, 3.0), ub(0.5, 6.0);
  for (int i = 0; i < 200; ++i) {
    const double S = us(rng), B = ub(rng);
    const double om = omega_from_entropy_bernoulli(S, B, m);
    CHECK(entropy_from_omega_bernoulli(om, B, m) == doctest::Approx(S).epsilon(1e-12));
  }
  // the combination identity: Xi + Omega equals the omega-part everywhere
  for (double w : {0.4, 0.8, 1.2, 1.5}) {
    const double om = omega_from_entropy_bernoulli(1.3, 2.1, m);
    const double xi = xi_of_omega(w, m) - om;
    CHECK(xi + om == doctest::Approx(xi_of_omega(w, m)).epsilon(1e-14));
  }
}

TEST_CASE("gas model validation") {
  CHECK_THROWS_AS(GasModel::make(0.9, 0.0), Error);
  CHECK_THROWS_AS(GasModel::make(1.4, -0.1), Error);
  const GasModel m = GasModel::make(1.4, 0.0);
  CHECK(m.kappa == doctest::Approx(0.2).epsilon(1e-16));
}
