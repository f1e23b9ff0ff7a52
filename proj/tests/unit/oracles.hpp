#pragma once

// Test-only reference computations. These deliberately avoid the library's
// quadrature and closed forms.

#include <cmath>
#include <functional>

namespace oracle {

// Composite trapezoid on [a, b] after u = a + (b - a) w^4, which removes the
// u^(gamma - 1) endpoint singularity when a == 0.
inline double trapezoid(const std::function<double(double)>& f, double a, double b,
                        long panels = 1000000) {
  if (b <= a) return 0.0;
  const double len = b - a;
  auto g = [&](double w) {
    const double w3 = w * w * w;
    const double jac = 4.0 * len * w3;
    if (jac == 0.0) return 0.0;
    return f(a + len * w3 * w) * jac;
  };
  const double h = 1.0 / static_cast<double>(panels);
  double sum = 0.5 * (g(0.0) + g(1.0));
  for (long i = 1; i < panels; ++i) sum += g(i * h);
  return sum * h;
}

// Weibull hazard with linear timescale terms, written out independently.
inline double hazard(double lambda, double gamma, double lp, double d1, double d2, double r,
                     double t) {
  return lambda * gamma * std::pow(t, gamma - 1.0) * std::exp(lp + d1 * r + d2 * (t - r));
}

inline double cumhaz(double lambda, double gamma, double lp, double d1, double d2, double r,
                     double a, double b, long panels = 1000000) {
  return trapezoid([&](double u) { return hazard(lambda, gamma, lp, d1, d2, r, u); }, a, b,
                   panels);
}

}  // namespace oracle
