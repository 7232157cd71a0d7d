#pragma once

// The change of variable r_delta, solution of
//
//   r'(s) = 1 / sqrt(1 + delta r(s)^2),   r(0) = 0.
//
// Its inverse is the elementary antiderivative G(u) = int_0^u sqrt(1 + delta t^2) dt,
// so r is evaluated by inverting G.  An adaptive Runge-Kutta integration of the
// Cauchy problem is kept alongside as an independent route.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "qlmpa/error.hpp"

namespace qlmpa {

/// G(u) = u sqrt(1 + delta u^2) / 2 + asinh(sqrt(delta) u) / (2 sqrt(delta)).
inline double r_inverse(double u, double delta) {
  if (delta == 0.0) return u;
  const double sd = std::sqrt(delta);
  return 0.5 * u * std::sqrt(1.0 + delta * u * u) + std::asinh(sd * u) / (2.0 * sd);
}

/// r_delta(s), by safeguarded Newton-Halley iteration on G(u) = s, bracketed by bisection.
inline double r_eval(double s, double delta) {
  if (delta == 0.0 || s == 0.0) return s;
  const double target = std::abs(s);
  // G(u) >= u and G(u) >= sqrt(delta) u^2 / 2 bound the root from above.
  const double large = std::sqrt(2.0 * target / std::sqrt(delta));
  double lo = 0.0;
  double hi = std::min(target, large);
  double u = target <= 1.0 ? target : large;
  u = std::min(u, hi);
  // Newton steps with Halley's curvature correction (G'' = delta u / G') give
  // cubic convergence from the asymptotic guess.  Iterate to full precision so
  // that r is smooth at the rounding level.
  for (int it = 0; it < 100; ++it) {
    const double q = std::sqrt(1.0 + delta * u * u);
    const double res = r_inverse(u, delta) - target;
    if (res == 0.0) break;
    if (res > 0.0)
      hi = u;
    else
      lo = u;
    const double newton = res / q;
    double next = u - newton / (1.0 - 0.5 * newton * delta * u / (q * q));
    if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - u) <= 1e-3 * std::cbrt(std::numeric_limits<double>::epsilon()) * u;
    u = next;
    if (done) break;
  }
  return std::copysign(u, s);
}

/// r_delta'(s) = 1 / sqrt(1 + delta r(s)^2).
inline double r_prime(double s, double delta) {
  if (delta == 0.0) return 1.0;
  const double r = r_eval(s, delta);
  return 1.0 / std::sqrt(1.0 + delta * r * r);
}

/// Integrates the Cauchy problem with an embedded Dormand-Prince 5(4) pair
/// and returns r at each (nondecreasing, nonnegative) abscissa.
inline std::vector<double> r_integrate_cauchy(std::span<const double> abscissae, double delta, double rtol = 1e-12,
                                              double atol = 1e-14) {
  if (delta < 0.0) throw InvalidArgument("r_integrate_cauchy: delta must be nonnegative");
  // Autonomous right-hand side, so the stage abscissae are not needed.
  auto rhs = [delta](double r) { return 1.0 / std::sqrt(1.0 + delta * r * r); };
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  std::vector<double> out;
  out.reserve(abscissae.size());
  double s = 0.0, r = 0.0, h = 1e-3;
  double k1 = rhs(r);
  for (double target : abscissae) {
    if (target < s) throw InvalidArgument("r_integrate_cauchy: abscissae must be nondecreasing and >= 0");
    while (s < target) {
      const bool last = s + h >= target;
      const double step = last ? target - s : h;
      const double k2 = rhs(r + step * a21 * k1);
      const double k3 = rhs(r + step * (a31 * k1 + a32 * k2));
      const double k4 = rhs(r + step * (a41 * k1 + a42 * k2 + a43 * k3));
      const double k5 = rhs(r + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const double k6 = rhs(r + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const double r_new = r + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const double k7 = rhs(r_new);
      const double err = std::abs(step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7));
      const double scale = atol + rtol * std::max(std::abs(r), std::abs(r_new));
      const double ratio = err / scale;
      if (ratio <= 1.0) {
        s = last ? target : s + step;
        r = r_new;
        k1 = k7;  // first-same-as-last
      }
      const double factor = ratio == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(ratio, -0.2), 0.2, 5.0);
      if (!last || ratio > 1.0) h = step * factor;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace qlmpa
