#pragma once
// Independent reference computations used only by the tests.

#include <cmath>
#include <functional>

namespace oracle {

// Romberg integration of f on [a, b]; stops when successive diagonal entries differ < tol.
inline double romberg(const std::function<double(double)>& f, double a, double b, double tol, int max_level = 22) {
  double R[32][32];
  double h = b - a;
  R[0][0] = 0.5 * h * (f(a) + f(b));
  for (int i = 1; i < max_level; ++i) {
    h *= 0.5;
    double s = 0.0;
    for (long k = 1; k < (1L << i); k += 2) s += f(a + k * h);
    R[i][0] = 0.5 * R[i - 1][0] + h * s;
    double p = 1.0;
    for (int j = 1; j <= i; ++j) {
      p *= 4.0;
      R[i][j] = R[i][j - 1] + (R[i][j - 1] - R[i - 1][j - 1]) / (p - 1.0);
    }
    if (i > 4 && std::abs(R[i][i] - R[i - 1][i - 1]) < tol) return R[i][i];
  }
  return R[max_level - 1][max_level - 1];
}

inline double k0_quadrature(double alpha) {
  return romberg([&](double t) { return std::exp(-alpha * std::cosh(t)); }, 0.0, 40.0, 1e-13);
}

inline double elliptic_k_quadrature(double m) {
  return romberg([&](double t) { return 1.0 / std::sqrt(1.0 - m * std::sin(t) * std::sin(t)); }, 0.0,
                 M_PI / 2, 1e-14);
}

}  // namespace oracle
