#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qrhf/coulomb.hpp"
#include "qrhf/errors.hpp"
#include "qrhf/specfun.hpp"

using namespace qrhf;

namespace {
CellGrid cgrid(int nx = 16, int nr = 96, double rmax = 10.0, double a = 1.0) {
  CellGrid g;
  g.period_a = a;
  g.n_x = nx;
  g.n_r = nr;
  g.r_max = rmax;
  return g;
}

template <class G, class F>
ScalarField sample(const G& g, F f) {
  ScalarField s = ScalarField::on(g);
  for (int i = 0; i < s.n_x(); ++i)
    for (int j = 0; j < s.n_r(); ++j) s(i, j) = f(g.x(i), g.radial().node(j));
  return s;
}

// radial Gaussian of unit 2D mass per unit length
double gauss2d(double r, double s) { return std::exp(-r * r / (s * s)) / (M_PI * s * s); }

// Neutral x-dependent charge: Gaussian ring profile modulated in x, minus its x-average Gaussian.
ScalarField neutral_field(const CellGrid& g, double amp, double phase, double s1, double s2) {
  ScalarField p = sample(g, [&](double x, double r) {
    return (1.0 + amp * std::cos(2 * M_PI * x / g.period_a + phase)) * gauss2d(r, s1);
  });
  ScalarField m = sample(g, [&](double, double r) { return gauss2d(r, s2); });
  return p - (p.integral() / m.integral()) * m;
}

SupercellGrid sgrid() {
  SupercellGrid g;
  g.half_length = 6.0;
  g.n_x = 95;
  g.r_max = 6.0;
  g.n_r = 48;
  return g;
}

// 3D Gaussian of unit mass centred at (xc, 0)
ScalarField gauss3d(const SupercellGrid& g, double xc, double sx, double sr) {
  return sample(g, [&](double x, double r) {
    return std::exp(-(x - xc) * (x - xc) / (sx * sx) - r * r / (sr * sr)) / (std::pow(M_PI, 1.5) * sx * sr * sr);
  });
}
}  // namespace

TEST_CASE("neutrality check") {
  CellGrid g = cgrid();
  NuclearDensity nd;
  nd.charge_z = 2;
  ScalarField mu = build_nuclear_density(nd, g);
  auto r = neutrality_check(mu);
  CHECK_FALSE(r.is_neutral);
  CHECK(r.zero_mode == doctest::Approx(2.0).epsilon(1e-10));
  auto z = neutrality_check(ScalarField::on(g));
  CHECK(z.is_neutral);
  CHECK(z.zero_mode == 0.0);
  CHECK_THROWS_AS(coulomb_energy_cell(mu, mu), ValidationError);
  CHECK_THROWS_AS(solve_periodic_potential(mu), ValidationError);
}

TEST_CASE("periodic Coulomb energy is symmetric and positive") {
  CellGrid g = cgrid();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ScalarField zero = ScalarField::on(g);
  CHECK(coulomb_energy_cell(zero, zero) == 0.0);
  for (int t = 0; t < 10; ++t) {
    ScalarField f = neutral_field(g, U(rng), 6 * U(rng), 0.5 + U(rng), 0.8 + 2 * U(rng));
    ScalarField h = neutral_field(g, U(rng), 6 * U(rng), 0.5 + U(rng), 0.8 + 2 * U(rng));
    double fh = coulomb_energy_cell(f, h), hf = coulomb_energy_cell(h, f);
    CHECK(std::abs(fh - hf) <= 1e-12 * std::max(1.0, std::abs(fh)));
    CHECK(coulomb_energy_cell(f, f) > 0.0);
  }
}

TEST_CASE("energy matches the potential pairing") {
  CellGrid g = cgrid(16, 128, 12.0, 1.3);
  ScalarField f = neutral_field(g, 0.7, 0.3, 0.8, 1.6);
  ScalarField V = solve_periodic_potential(f);
  double D = coulomb_energy_cell(f, f);
  // the real-space log kernel is the exact inverse of the radial operator on neutral charges
  CHECK(std::abs(f.inner(V) - D) < 1e-9 * D);
}

TEST_CASE("radial log potential vs 2D quadrature") {
  // two concentric bumps of equal mass: q(r) = g(r, 0.7) - g(r, 1.5), compactly supported surrogate
  auto qbar = [](double r) { return gauss2d(r, 0.7) - gauss2d(r, 1.5); };
  RadialGrid fine{12.0, 32768};
  Eigen::VectorXd q(fine.n_r);
  for (int j = 0; j < fine.n_r; ++j) q(j) = qbar(fine.node(j));
  Eigen::VectorXd T = radial_log_potential(q, fine);

  // oracle: V(p) = -2 int q(|y|) log|p - y| d^2y, polar coordinates, theta by trapezoid
  auto oracle_at = [&](double p) {
    auto gl = specfun::gauss_legendre(20);
    std::vector<std::pair<double, double>> panels;
    // graded toward p from both sides
    for (int side = 0; side < 2; ++side) {
      double lo = side == 0 ? 0.0 : p, hi = side == 0 ? p : 12.0;
      double span = hi - lo;
      double edge = side == 0 ? hi : lo;
      double w = span;
      std::vector<double> cuts{0.0};
      while (w > 1e-7 * span) {
        w *= 0.5;
        cuts.push_back(span - w);
      }
      cuts.push_back(span);
      for (size_t c = 0; c + 1 < cuts.size(); ++c) {
        double a0 = cuts[c], a1 = cuts[c + 1];
        if (side == 0) panels.push_back({lo + a0, lo + a1});
        else panels.push_back({edge + span - a1, edge + span - a0});
      }
    }
    const int nth = 2048;
    double total = 0.0;
    for (auto [a0, a1] : panels) {
      double c = 0.5 * (a0 + a1), h = 0.5 * (a1 - a0);
      for (size_t k = 0; k < gl.nodes.size(); ++k) {
        double rp = c + h * gl.nodes[k];
        double th = 0.0;
        for (int t = 0; t < nth; ++t) {
          double ang = 2 * M_PI * (t + 0.5) / nth;
          double d2 = p * p + rp * rp - 2 * p * rp * std::cos(ang);
          th += 0.5 * std::log(d2);
        }
        th *= 2 * M_PI / nth;
        total += h * gl.weights[k] * rp * qbar(rp) * th;
      }
    }
    return -2.0 * total;
  };

  for (int s = 0; s < 20; ++s) {
    int j = 160 + s * 1200;
    double p = fine.node(j);
    CHECK(std::abs(T(j) - oracle_at(p)) < 1e-6);
  }
}

TEST_CASE("x-independent neutral charge gives only the log part") {
  CellGrid g = cgrid(16, 128, 12.0);
  ScalarField q = sample(g, [](double, double r) { return gauss2d(r, 0.7) - gauss2d(r, 1.5); });
  q.values.col(0).array() -= q.integral() / (g.dx() * g.n_x * g.radial().weight(0));  // exact neutrality
  ScalarField V = solve_periodic_potential(q);
  Eigen::VectorXd qbar = q.values.row(0).transpose();
  Eigen::VectorXd T = radial_log_potential(qbar, g.radial());
  for (int i = 0; i < g.n_x; ++i)
    for (int j = 0; j < g.n_r; ++j) CHECK(std::abs(V(i, j) - T(j)) < 1e-10);
  // beyond the support the neutral log potential vanishes
  CHECK(std::abs(V(0, g.n_r - 1)) < 1e-8);
}

TEST_CASE("periodic potential solves Poisson") {
  CellGrid g = cgrid(32, 128, 12.0, 1.0);
  NuclearDensity nd;
  nd.charge_z = 1;
  ScalarField mu = build_nuclear_density(nd, g);
  ScalarField rho = sample(g, [](double, double r) { return gauss2d(r, 1.2); });
  rho *= 1.0 / rho.integral();
  ScalarField q = rho - mu;
  ScalarField V = solve_periodic_potential(q);

  // -Laplacian: spectral in x, finite differences in r (same stencil as the radial operator)
  const int nx = g.n_x, nr = g.n_r;
  RadialOperator op = radial_laplacian(g.radial(), 0);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(nx, nr);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nr; ++j) {
      double sj = std::sqrt(g.radial().weight(j));
      double acc = op.diag(j) * sj * V(i, j);
      if (j > 0) acc += op.off(j - 1) * std::sqrt(g.radial().weight(j - 1)) * V(i, j - 1);
      if (j + 1 < nr) acc += op.off(j) * std::sqrt(g.radial().weight(j + 1)) * V(i, j + 1);
      lap(i, j) = acc / sj;
    }
  for (int j = 0; j < nr; ++j)
    for (int n = -nx / 2; n < nx / 2; ++n) {
      std::complex<double> c = 0.0;
      for (int i = 0; i < nx; ++i) c += V(i, j) * std::polar(1.0, -2 * M_PI * n * g.x(i));
      c /= nx;
      double k2 = 4 * M_PI * M_PI * n * n;
      for (int i = 0; i < nx; ++i) lap(i, j) += k2 * std::real(c * std::polar(1.0, 2 * M_PI * n * g.x(i)));
    }
  double res = 0.0, ref = 0.0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nr - 1; ++j) {
      double w = g.radial().weight(j);
      res += w * std::pow(lap(i, j) - 4 * M_PI * q(i, j), 2);
      ref += w * std::pow(4 * M_PI * q(i, j), 2);
    }
  CHECK(std::sqrt(res / ref) < 0.02);
  // decays to zero at the wall
  CHECK(V.values.col(nr - 1).cwiseAbs().maxCoeff() < 1e-3 * V.values.cwiseAbs().maxCoeff());
}

TEST_CASE("free Coulomb far field of a unit charge") {
  SupercellGrid g = sgrid();
  ScalarField f = sample(g, [](double x, double r) {
    double d2 = x * x + r * r;
    return d2 < 1.0 ? std::exp(-1.0 / (1.0 - d2)) : 0.0;
  });
  f *= 1.0 / f.integral();
  ScalarField V = free_coulomb_potential(f);
  // along the axis
  for (int i : {0, 5, 10}) {
    double d = std::abs(g.x(i));
    CHECK(std::abs(V(i, 0) * d - 1.0) < 0.01);
  }
  // in the transverse direction at x = 0 (node 47)
  for (int j : {30, 40, 47}) {
    double d = std::hypot(g.x(47), g.radial().node(j));
    CHECK(std::abs(V(47, j) * d - 1.0) < 0.01);
  }
}

TEST_CASE("free Coulomb of a neutral quadrupole decays faster than 1/d") {
  SupercellGrid g = sgrid();
  ScalarField f = gauss3d(g, 0.0, 1.0, 0.5) - gauss3d(g, 0.0, 0.5, 1.0);
  ScalarField V = free_coulomb_potential(f);
  // log-log slope along the axis between d ~ 3 and d ~ 5.8
  std::vector<double> ld, lv;
  for (int i = 0; i < 24; ++i) {
    double d = std::abs(g.x(i));
    if (d < 3.0) continue;
    ld.push_back(std::log(d));
    lv.push_back(std::log(std::abs(V(i, 0))));
  }
  double mx = 0, my = 0;
  for (size_t k = 0; k < ld.size(); ++k) mx += ld[k], my += lv[k];
  mx /= ld.size();
  my /= ld.size();
  double sxy = 0, sxx = 0;
  for (size_t k = 0; k < ld.size(); ++k) sxy += (ld[k] - mx) * (lv[k] - my), sxx += (ld[k] - mx) * (ld[k] - mx);
  double slope = sxy / sxx;
  CHECK(slope < -2.5);
}

TEST_CASE("free Coulomb self energy vs Monte Carlo") {
  SupercellGrid g = sgrid();
  const double s = 0.7;  // per-coordinate std of the Gaussian
  ScalarField f = sample(g, [&](double x, double r) {
    return std::exp(-(x * x + r * r) / (2 * s * s)) / std::pow(2 * M_PI * s * s, 1.5);
  });
  double D = coulomb_energy_free(f, f);
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> N(0.0, s);
  const long samples = 10000000;
  double acc = 0.0;
  for (long k = 0; k < samples; ++k) {
    double dx = N(rng) - N(rng), dy = N(rng) - N(rng), dz = N(rng) - N(rng);
    acc += 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  double mc = acc / samples;
  CHECK(D > 0.0);
  CHECK(std::abs(D - mc) < 0.02 * mc);
}

TEST_CASE("free Coulomb form: bilinear, symmetric, positive") {
  SupercellGrid g = sgrid();
  ScalarField zero = ScalarField::on(g);
  ScalarField f = gauss3d(g, -1.0, 0.8, 0.6), h = gauss3d(g, 1.5, 0.5, 1.0);
  CHECK(coulomb_energy_free(zero, h) == 0.0);
  double fh = coulomb_energy_free(f, h);
  CHECK(std::abs(coulomb_energy_free(2.5 * f, h) - 2.5 * fh) < 1e-12 * std::abs(fh) * 10);
  CHECK(std::abs(coulomb_energy_free(h, f) - fh) < 2e-3 * fh);
  ScalarField Vf = free_coulomb_potential(f), Vh = free_coulomb_potential(h), Vs = free_coulomb_potential(f + h);
  CHECK((Vs.values - Vf.values - Vh.values).cwiseAbs().maxCoeff() < 1e-12 * Vs.values.cwiseAbs().maxCoeff() * 10);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    ScalarField r = ScalarField::on(g);
    for (int b = 0; b < 4; ++b) r += U(rng) * gauss3d(g, 3 * U(rng), 0.4 + 0.3 * std::abs(U(rng)), 0.4 + std::abs(U(rng)));
    CHECK(coulomb_energy_free(r, r) >= 0.0);
  }
  BoundaryReport rep;
  free_coulomb_potential(sample(g, [](double, double) { return 1.0; }), &rep);
  CHECK_FALSE(rep.decayed);
}

TEST_CASE("mixed Fourier transform of G") {
  CellGrid g;
  g.n_x = 128;
  g.r_max = 6.0;
  g.n_r = 384;
  MixedSpectrum s = mixed_fourier_forward(greens_cell_field(g));
  const double d = std::max(g.dx(), g.radial().h());
  int modes = 0, max_n = 0;
  double worst = 0.0;
  for (int n = -g.n_x / 2; n < g.n_x / 2; ++n)
    for (int j = 3; j < g.n_r; ++j) {
      double K2 = 4.0 * M_PI * M_PI * n * n + s.k_grid(j) * s.k_grid(j);
      if (std::sqrt(K2) * d > 2.0 * M_PI / 24.0) continue;  // fewer than 24 samples per wavelength
      std::complex<double> c = s.at(n, j);
      CHECK(std::abs(c.imag()) < 1e-10);
      worst = std::max(worst, std::abs(c.real() * K2 / 2.0 - 1.0));
      ++modes;
      max_n = std::max(max_n, std::abs(n));
    }
  CHECK(modes > 50);
  CHECK(max_n >= 2);
  CHECK(worst < 0.01);
  CHECK_THROWS_AS(greens_cell_field(CellGrid{2.0, 8, 4.0, 16, 0, 2}), ValidationError);
}
