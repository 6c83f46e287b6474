#include "qrhf/specfun.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qrhf/errors.hpp"

namespace qrhf::specfun {

namespace {
constexpr double pi = std::numbers::pi;

double reduce_x(double x) {
  // map to [-1/2, 1/2)
  double y = x - std::floor(x + 0.5);
  if (y >= 0.5) y -= 1.0;
  return y;
}

// asinh(a) - asinh(b) without cancellation when a and b are large with the same sign.
double asinh_diff(double a, double b) {
  if (a * b <= 0.0) return std::asinh(a) - std::asinh(b);
  if (a < 0.0) return -asinh_diff(-a, -b);
  double num = (a - b) * (a + b);
  double den = a * std::sqrt(1.0 + b * b) + b * std::sqrt(1.0 + a * a);
  return std::asinh(num / den);
}

// One term of the real-space sum: point charge minus the uniformly smeared unit segment.
double lattice_term(double s, double r) {
  double point = 1.0 / std::hypot(s, r);
  double smeared = asinh_diff((s + 0.5) / r, (s - 0.5) / r);
  return point - smeared;
}

// Euler-Maclaurin remainder of sum_{n>N} [f(n) - int_{n-1/2}^{n+1/2} f] for f(y) = 1/|y - x|,
// evaluated at the panel edge y = N + 1/2 (s = y - x).
double lattice_tail(double s, double r) {
  double q = s * s + r * r;
  double d1 = -s * std::pow(q, -1.5);
  double d3 = (-6.0 * s * s * s + 9.0 * s * r * r) * std::pow(q, -3.5);
  return d1 / 24.0 - 7.0 * d3 / 5760.0;
}

void check_r(double r) {
  if (!(r > 0.0)) throw DomainError("Green's function evaluated at r = " + std::to_string(r));
}
}  // namespace

void GreensEvalConfig::validate() const {
  if (series_terms < 1) throw ValidationError("series_terms must be >= 1");
  if (lattice_terms < 1) throw ValidationError("lattice_terms must be >= 1");
  if (quad_points < 2) throw ValidationError("quad_points must be >= 2");
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  if (!(radial_box > 0.0)) throw ValidationError("radial_box must be > 0");
  if (!(r_switch > 0.0)) throw ValidationError("r_switch must be > 0");
}

double bessel_k0(double alpha) {
  if (!(alpha > 0.0)) throw DomainError("bessel_k0 requires alpha > 0");
  // Trapezoid rule in t on the scaled integrand e^{-alpha (cosh t - 1)}; for this analytic,
  // rapidly decaying integrand the rule converges geometrically as h halves.
  double t_max = std::acosh(1.0 + 40.0 / alpha);
  int n = 16;
  double h = t_max / n;
  double sum = 0.5;  // t = 0 endpoint
  for (int i = 1; i <= n; ++i) sum += std::exp(-alpha * (std::cosh(i * h) - 1.0));
  double est = h * sum;
  for (int level = 0; level < 20; ++level) {
    double add = 0.0;
    for (int i = 0; i < n; ++i) add += std::exp(-alpha * (std::cosh((i + 0.5) * h) - 1.0));
    sum += add;
    n *= 2;
    h *= 0.5;
    double next = h * sum;
    bool done = std::abs(next - est) <= 1e-15 * next;
    est = next;
    if (done && level >= 1) break;
  }
  return est * std::exp(-alpha);
}

double elliptic_k(double m) {
  if (!(m >= 0.0) || !(m < 1.0)) throw DomainError("elliptic_k requires 0 <= m < 1");
  double a = 1.0, b = std::sqrt(1.0 - m);
  for (int i = 0; i < 60 && std::abs(a - b) > 1e-16 * a; ++i) {
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return pi / (a + b);
}

int greens_series_length(double r, const GreensEvalConfig& cfg) {
  check_r(r);
  int n = 1;
  for (; n <= cfg.series_terms; ++n)
    if (4.0 * bessel_k0(2.0 * pi * n * r) < cfg.tol) break;
  return n - 1;
}

namespace {
double tilde_series(double x, double r, const GreensEvalConfig& cfg) {
  double y = reduce_x(x);
  double s = 0.0;
  for (int n = 1; n <= cfg.series_terms; ++n) {
    double term = 4.0 * bessel_k0(2.0 * pi * n * r);
    if (term < cfg.tol) break;
    s += term * std::cos(2.0 * pi * n * y);
  }
  return s;
}

double tilde_lattice(double x, double r, int terms) {
  double y = reduce_x(x);
  double s = 0.0;
  // sum from the outside in to keep small terms from being swamped
  for (int n = terms; n >= 1; --n) s += lattice_term(y - n, r) + lattice_term(y + n, r);
  s += lattice_term(y, r);
  double edge = terms + 0.5;
  s += lattice_tail(edge - y, r) + lattice_tail(edge + y, r);
  return s;
}
}  // namespace

double greens_series(double x, double r, const GreensEvalConfig& cfg) {
  check_r(r);
  return -2.0 * std::log(r) + tilde_series(x, r, cfg);
}

double greens_lattice(double x, double r, const GreensEvalConfig& cfg) {
  check_r(r);
  return -2.0 * std::log(r) + tilde_lattice(x, r, cfg.lattice_terms);
}

double greens_tilde(double x, double r, const GreensEvalConfig& cfg) {
  check_r(r);
  return r < cfg.r_switch ? tilde_lattice(x, r, cfg.lattice_terms) : tilde_series(x, r, cfg);
}

double greens(double x, double r, const GreensEvalConfig& cfg) {
  return -2.0 * std::log(r) + greens_tilde(x, r, cfg);
}

GaussRule gauss_legendre(int n) {
  GaussRule g;
  g.nodes.resize(n);
  g.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    g.nodes[i] = -z;
    g.nodes[n - 1 - i] = z;
    g.weights[i] = g.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return g;
}

namespace {
struct Panel {
  double lo, hi;
};

// Panels on [0, b], geometrically refined toward 0.
std::vector<Panel> graded_panels(double b, int levels, double ratio) {
  std::vector<Panel> p;
  double hi = b;
  for (int i = 0; i < levels; ++i) {
    double lo = hi * ratio;
    p.push_back({lo, hi});
    hi = lo;
  }
  p.push_back({0.0, hi});
  return p;
}

std::vector<Panel> uniform_panels(double a, double b, int count) {
  std::vector<Panel> p;
  for (int i = 0; i < count; ++i) p.push_back({a + (b - a) * i / count, a + (b - a) * (i + 1) / count});
  return p;
}

struct Nodes {
  std::vector<double> t, w;
};

Nodes expand(const std::vector<Panel>& panels, const GaussRule& g) {
  Nodes out;
  for (const auto& p : panels) {
    double c = 0.5 * (p.lo + p.hi), h = 0.5 * (p.hi - p.lo);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      out.t.push_back(c + h * g.nodes[i]);
      out.w.push_back(h * g.weights[i]);
    }
  }
  return out;
}
}  // namespace

double greens_tilde_cell_mean(const GreensEvalConfig& cfg) {
  cfg.validate();
  GaussRule g = gauss_legendre(cfg.quad_points);
  const double rs = std::min(cfg.r_switch, cfg.radial_box);

  // Inner cylinder r < r_switch: lattice form, both variables graded toward the origin where
  // the point-charge term 1/|(x,r)| and the log of the smeared segment are singular.
  double inner = 0.0;
  {
    std::vector<Panel> xp = graded_panels(rs, 24, 0.35);
    for (const auto& p : uniform_panels(rs, 0.5, 6)) xp.push_back(p);
    Nodes xs = expand(xp, g);
    Nodes rr = expand(graded_panels(rs, 24, 0.35), g);
    for (size_t j = 0; j < rr.t.size(); ++j) {
      double r = rr.t[j];
      double line = 0.0;
      for (size_t i = 0; i < xs.t.size(); ++i) line += xs.w[i] * tilde_lattice(xs.t[i], r, cfg.lattice_terms);
      inner += rr.w[j] * 2.0 * pi * r * 2.0 * line;  // factor 2: x in [-1/2, 0)
    }
  }

  // Outer shell r_switch <= r <= radial_box: K0 series, Bessel values shared across x nodes.
  double outer = 0.0;
  if (cfg.radial_box > rs) {
    Nodes xs = expand(uniform_panels(0.0, 0.5, 8), g);
    std::vector<Panel> rp;
    double lo = rs, width = rs;
    while (lo < cfg.radial_box) {
      double hi = std::min(cfg.radial_box, lo + width);
      rp.push_back({lo, hi});
      lo = hi;
      width *= 1.5;
    }
    Nodes rr = expand(rp, g);
    for (size_t j = 0; j < rr.t.size(); ++j) {
      double r = rr.t[j];
      std::vector<double> k0;
      for (int n = 1; n <= cfg.series_terms; ++n) {
        double term = 4.0 * bessel_k0(2.0 * pi * n * r);
        if (term < cfg.tol) break;
        k0.push_back(term);
      }
      double line = 0.0;
      for (size_t i = 0; i < xs.t.size(); ++i) {
        double v = 0.0;
        for (size_t n = 0; n < k0.size(); ++n) v += k0[n] * std::cos(2.0 * pi * (n + 1) * xs.t[i]);
        line += xs.w[i] * v;
      }
      outer += rr.w[j] * 2.0 * pi * r * 2.0 * line;
    }
  }
  return inner + outer;
}

std::vector<double> bessel_j0_zeros(int count) {
  std::vector<double> z;
  z.reserve(count);
  for (int k = 1; k <= count; ++k) {
    double beta = (k - 0.25) * pi;
    double x = beta + 1.0 / (8.0 * beta) - 124.0 / (3.0 * std::pow(8.0 * beta, 3));
    for (int it = 0; it < 50; ++it) {
      double f = std::cyl_bessel_j(0.0, x);
      double fp = -std::cyl_bessel_j(1.0, x);
      double dx = f / fp;
      x -= dx;
      if (std::abs(dx) < 1e-15 * x) break;
    }
    z.push_back(x);
  }
  return z;
}

}  // namespace qrhf::specfun
