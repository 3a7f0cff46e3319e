#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace dustflow::quad {

inline constexpr double kRelTol = 1e-12;
inline constexpr unsigned kMaxDepth = 12;

/// Adaptive Gauss-Kronrod (61-point) on a finite interval of a smooth integrand.
template <class F>
double gauss_kronrod(F&& f, double lo, double hi, double tol = kRelTol) {
  if (!(hi > lo)) return 0.0;
  // Boost compares the unscaled local error against a scaled tolerance, so
  // short intervals never converge; integrate over [-1, 1] instead.
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  auto unit = [&](double t) { return f(mid + half * t); };
  double err = 0.0;
  return half * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(unit, -1.0, 1.0, kMaxDepth,
                                                                               tol, &err);
}

/// Integral over [lo, hi] of g(r) r^(a-1) (1-r)^(b-1) dr for 0 <= lo < hi <= 1.
///
/// g is called as g(r, q) with q = 1 - r carried separately, so that factors
/// of (1-r) stay accurate when r rounds to 1.
///
/// `p0` is the power of g at the origin (g(r) ~ r^p0). Both endpoint
/// singularities are removed by change of variables: x = r^(p0+a) on the
/// lower half, y = (1-r)^b on the upper half, so that the transformed
/// integrands are bounded. A lower piece that starts away from the origin
/// uses r = e^s instead, which works for any p0.
template <class G>
double beta_weighted(double a, double b, G&& g, double p0, double lo, double hi,
                     double tol = kRelTol) {
  if (!(hi > lo)) return 0.0;
  constexpr double kMid = 0.5;
  double total = 0.0;

  const double lower_hi = std::min(hi, kMid);
  if (lo < lower_hi) {
    const double e1 = p0 + a;  // exponent of r^(p0+a-1), plus one
    if (lo == 0.0) {
      // requires e1 > 0; checked by the callers through the measure flags
      const double xhi = std::pow(lower_hi, e1);
      auto integrand = [&](double x) {
        if (x <= 0.0) return 0.0;
        const double r = std::pow(x, 1.0 / e1);
        return g(r, 1.0 - r) * std::pow(r, -p0) * std::pow(1.0 - r, b - 1.0) / e1;
      };
      total += gauss_kronrod(integrand, 0.0, xhi, tol);
    } else {
      auto integrand = [&](double s) {
        const double r = std::exp(s);
        return g(r, 1.0 - r) * std::pow(r, a) * std::pow(1.0 - r, b - 1.0);
      };
      total += gauss_kronrod(integrand, std::log(lo), std::log(lower_hi), tol);
    }
  }

  const double upper_lo = std::max(lo, kMid);
  if (upper_lo < hi) {
    const double ylo = std::pow(1.0 - hi, b);
    const double yhi = std::pow(1.0 - upper_lo, b);
    auto integrand = [&](double y) {
      const double q = (y <= 0.0) ? 0.0 : std::pow(y, 1.0 / b);
      const double r = 1.0 - q;
      return g(r, q) * std::pow(r, a - 1.0) / b;
    };
    total += gauss_kronrod(integrand, ylo, yhi, tol);
  }
  return total;
}

}  // namespace dustflow::quad
