#pragma once

// Monotone cubic (Fritsch-Carlson) interpolation on a strictly increasing
// abscissa, plus small finite-difference helpers for sampled curves.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "ssp/common.hpp"

namespace ssp {

class Pchip {
 public:
  Pchip() = default;

  Pchip(std::vector<double> xs, std::vector<double> fs) : x_(std::move(xs)), f_(std::move(fs)) {
    const std::size_t n = x_.size();
    if (n < 2 || f_.size() != n) fail(errc::invalid_config, "interpolant needs >= 2 matched samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) fail(errc::invalid_config, "interpolant abscissa must be strictly increasing");
    d_.assign(n, 0.0);
    std::vector<double> h(n - 1), s(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      s[i] = (f_[i + 1] - f_[i]) / h[i];
    }
    if (n == 2) {
      d_[0] = d_[1] = s[0];
      return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (s[i - 1] * s[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
      }
    }
    d_[0] = edge_slope(h[0], h[1], s[0], s[1]);
    d_[n - 1] = edge_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
  }

  double operator()(double x) const { return eval(x); }

  double eval(double x) const {
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * f_[i] + h * h10 * d_[i] + h01 * f_[i + 1] + h * h11 * d_[i + 1];
  }

  double deriv(double x) const {
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
    const double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
    return g00 * f_[i] + g10 * d_[i] + g01 * f_[i + 1] + g11 * d_[i + 1];
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

 private:
  static double edge_slope(double h0, double h1, double s0, double s1) {
    double d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if (d * s0 <= 0.0) return 0.0;
    if (s0 * s1 < 0.0 && std::abs(d) > 3.0 * std::abs(s0)) return 3.0 * s0;
    return d;
  }

  std::size_t segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::ptrdiff_t i = std::distance(x_.begin(), it) - 1;
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(x_.size()) - 2);
    return static_cast<std::size_t>(i);
  }

  std::vector<double> x_, f_, d_;
};

// Second-order finite-difference derivative of sampled data on a (possibly
// nonuniform) strictly increasing grid; three-point one-sided at the ends.
inline std::vector<double> fd_derivative(const std::vector<double>& x, const std::vector<double>& f) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  if (n < 3) {
    if (n == 2) d[0] = d[1] = (f[1] - f[0]) / (x[1] - x[0]);
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hm = x[i] - x[i - 1], hp = x[i + 1] - x[i];
    d[i] = (-hp / (hm * (hm + hp))) * f[i - 1] + ((hp - hm) / (hm * hp)) * f[i] +
           (hm / (hp * (hm + hp))) * f[i + 1];
  }
  {
    const double h0 = x[1] - x[0], h1 = x[2] - x[1];
    d[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1))) * f[0] + ((h0 + h1) / (h0 * h1)) * f[1] -
           (h0 / (h1 * (h0 + h1))) * f[2];
  }
  {
    const double h1 = x[n - 2] - x[n - 3], h0 = x[n - 1] - x[n - 2];
    d[n - 1] = (h0 / (h1 * (h0 + h1))) * f[n - 3] - ((h0 + h1) / (h0 * h1)) * f[n - 2] +
               ((2 * h0 + h1) / (h0 * (h0 + h1))) * f[n - 1];
  }
  return d;
}

}  // namespace ssp
