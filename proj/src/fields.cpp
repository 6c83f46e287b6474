#include "qrhf/fields.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include "qrhf/errors.hpp"
#include "qrhf/specfun.hpp"

namespace qrhf {

namespace {
constexpr double pi = std::numbers::pi;
using cplx = std::complex<double>;
}  // namespace

double RadialGrid::weight(int j) const { return 2.0 * pi * node(j) * h(); }

double CellGrid::xi(int k) const { return -pi / period_a + 2.0 * pi / period_a * k / n_xi; }

void CellGrid::validate() const {
  if (!(period_a > 0.0)) throw ValidationError("grid.period_a must be > 0");
  if (n_x < 8 || n_x % 2 != 0) throw ValidationError("grid.n_x must be even and >= 8");
  if (n_r < 16) throw ValidationError("grid.n_r must be >= 16");
  if (!(r_max > 0.0)) throw ValidationError("grid.r_max must be > 0");
  if (m_max < 0) throw ValidationError("grid.m_max must be >= 0");
  if (n_xi < 1) throw ValidationError("grid.n_xi must be >= 1");
}

bool CellGrid::operator==(const CellGrid& o) const {
  return period_a == o.period_a && n_x == o.n_x && r_max == o.r_max && n_r == o.n_r && m_max == o.m_max &&
         n_xi == o.n_xi;
}

void SupercellGrid::validate() const {
  if (!(half_length > 0.0)) throw ValidationError("supercell half_length must be > 0");
  if (n_x < 8) throw ValidationError("supercell n_x must be >= 8");
  if (n_r < 16) throw ValidationError("supercell n_r must be >= 16");
  if (!(r_max > 0.0)) throw ValidationError("supercell r_max must be > 0");
}

bool SupercellGrid::operator==(const SupercellGrid& o) const {
  return half_length == o.half_length && n_x == o.n_x && r_max == o.r_max && n_r == o.n_r;
}

SupercellGrid SupercellGrid::with_spacing(double half_length, double dx_target, RadialGrid radial) {
  SupercellGrid g;
  g.half_length = half_length;
  g.n_x = static_cast<int>(std::lround(2.0 * half_length / dx_target)) - 1;
  g.r_max = radial.r_max;
  g.n_r = radial.n_r;
  g.validate();
  return g;
}

ScalarField ScalarField::on(const CellGrid& g) {
  ScalarField f;
  f.domain = Domain::cell_periodic;
  f.x0 = g.x(0);
  f.dx = g.dx();
  f.period = g.period_a;
  f.radial = g.radial();
  f.values = Eigen::MatrixXd::Zero(g.n_x, g.n_r);
  return f;
}

ScalarField ScalarField::on(const SupercellGrid& g) {
  ScalarField f;
  f.domain = Domain::supercell;
  f.x0 = g.x(0);
  f.dx = g.dx();
  f.period = 0.0;
  f.radial = g.radial();
  f.values = Eigen::MatrixXd::Zero(g.n_x, g.n_r);
  return f;
}

double ScalarField::integral() const {
  double s = 0.0;
  for (int j = 0; j < n_r(); ++j) s += radial.weight(j) * values.col(j).sum();
  return s * dx;
}

double ScalarField::inner(const ScalarField& o) const {
  require_same_grid(o, "inner");
  double s = 0.0;
  for (int j = 0; j < n_r(); ++j) s += radial.weight(j) * values.col(j).dot(o.values.col(j));
  return s * dx;
}

double ScalarField::l2_norm() const { return std::sqrt(inner(*this)); }

bool ScalarField::same_grid(const ScalarField& o) const {
  return domain == o.domain && x0 == o.x0 && dx == o.dx && period == o.period && radial == o.radial &&
         values.rows() == o.values.rows() && values.cols() == o.values.cols();
}

void ScalarField::require_same_grid(const ScalarField& o, const char* where) const {
  if (!same_grid(o)) throw ValidationError(std::string("grid mismatch in ") + where);
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same_grid(o, "operator+=");
  values += o.values;
  return *this;
}
ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same_grid(o, "operator-=");
  values -= o.values;
  return *this;
}
ScalarField& ScalarField::operator*=(double s) {
  values *= s;
  return *this;
}
ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }

RadialOperator radial_laplacian(const RadialGrid& g, int m) {
  const int n = g.n_r;
  const double h = g.h();
  RadialOperator op;
  op.diag.resize(n);
  op.off.resize(n - 1);
  for (int j = 0; j < n; ++j) {
    double r = g.node(j);
    double inner_face = j == 0 ? 0.0 : g.face(j - 1);
    double outer_face = g.face(j);
    double d = (inner_face + outer_face) / (r * h * h);
    if (j == n - 1) d += outer_face / (r * h * h);  // odd ghost node: u = 0 on the wall
    op.diag(j) = d + double(m) * m / (r * r);
    if (j + 1 < n) op.off(j) = -outer_face / (h * h * std::sqrt(r * g.node(j + 1)));
  }
  return op;
}

const RadialBasis& radial_basis(const RadialGrid& g, int m) {
  static std::mutex mtx;
  static std::map<std::tuple<double, int, int>, std::unique_ptr<RadialBasis>> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_tuple(g.r_max, g.n_r, m);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  RadialOperator op = radial_laplacian(g, m);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(g.n_r, g.n_r);
  for (int j = 0; j < g.n_r; ++j) {
    A(j, j) = op.diag(j);
    if (j + 1 < g.n_r) A(j, j + 1) = A(j + 1, j) = op.off(j);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  auto b = std::make_unique<RadialBasis>();
  b->grid = g;
  b->m = m;
  b->k2 = es.eigenvalues();
  b->vectors = es.eigenvectors();
  for (int c = 0; c < g.n_r; ++c)
    if (b->vectors(0, c) < 0.0) b->vectors.col(c) *= -1.0;
  // Fourier-Bessel weights of the continuum disk basis, 2 / (R^2 J1(j_{0,k})^2)
  auto zeros = specfun::bessel_j0_zeros(g.n_r);
  b->hankel_weight.resize(g.n_r);
  b->k.resize(g.n_r);
  for (int c = 0; c < g.n_r; ++c) {
    b->k(c) = zeros[c] / g.r_max;
    double j1 = std::cyl_bessel_j(1.0, zeros[c]);
    b->hankel_weight(c) = 2.0 / (g.r_max * g.r_max * j1 * j1);
  }
  auto& ref = *b;
  cache.emplace(key, std::move(b));
  return ref;
}

int MixedSpectrum::row_of(int n) const {
  int r = n + n_x / 2;
  if (r < 0 || r >= n_x) throw DomainError("x-mode " + std::to_string(n) + " outside the spectrum");
  return r;
}

MixedSpectrum mixed_fourier_forward(const ScalarField& f) {
  if (f.domain != Domain::cell_periodic) throw ValidationError("mixed_fourier_forward needs a cell-periodic field");
  const int nx = f.n_x(), nr = f.n_r();
  const double a = f.period;
  const RadialBasis& rb = radial_basis(f.radial, 0);

  // radial coefficients c_j(x_i)
  Eigen::MatrixXd s(nx, nr);
  for (int j = 0; j < nr; ++j) s.col(j) = f.values.col(j) * std::sqrt(f.radial.weight(j));
  Eigen::MatrixXd c = s * rb.vectors;

  MixedSpectrum out;
  out.period = a;
  out.n_x = nx;
  out.radial = f.radial;
  out.k_grid = rb.k;
  out.coeffs.resize(nx, nr);
  Eigen::MatrixXcd E(nx, nx);  // E(row, i) = dx e^{-2 pi i n x_i / a}
  for (int r = 0; r < nx; ++r) {
    int n = r - nx / 2;
    out.modes.push_back(n);
    for (int i = 0; i < nx; ++i) E(r, i) = f.dx * std::polar(1.0, -2.0 * pi * n * f.x(i) / a);
  }
  out.coeffs = E * c.cast<cplx>();
  for (int j = 0; j < nr; ++j) out.coeffs.col(j) /= std::sqrt(a) * std::sqrt(2.0 * pi * rb.hankel_weight(j));
  return out;
}

ScalarField mixed_fourier_inverse(const MixedSpectrum& s, const CellGrid& grid) {
  if (s.n_x != grid.n_x || !(s.radial == grid.radial()) || s.period != grid.period_a)
    throw ValidationError("mixed_fourier_inverse: spectrum does not belong to this grid");
  const int nx = grid.n_x, nr = grid.n_r;
  const double a = grid.period_a;
  const RadialBasis& rb = radial_basis(grid.radial(), 0);
  Eigen::MatrixXcd X = s.coeffs;
  for (int j = 0; j < nr; ++j) X.col(j) *= std::sqrt(a) * std::sqrt(2.0 * pi * rb.hankel_weight(j));
  Eigen::MatrixXcd E(nx, nx);  // E(i, row) = e^{2 pi i n x_i / a} / a
  for (int i = 0; i < nx; ++i)
    for (int r = 0; r < nx; ++r) E(i, r) = std::polar(1.0 / a, 2.0 * pi * (r - nx / 2) * grid.x(i) / a);
  Eigen::MatrixXd c = (E * X).real();
  Eigen::MatrixXd sv = c * rb.vectors.transpose();
  ScalarField f = ScalarField::on(grid);
  for (int j = 0; j < nr; ++j) f.values.col(j) = sv.col(j) / std::sqrt(grid.radial().weight(j));
  return f;
}

void ChiProfile::validate() const {
  if (order < 2) throw ValidationError("cutoff profile order must be >= 2 (C^2)");
  if (!(lo_frac >= 0.0 && hi_frac <= 1.0 && lo_frac < hi_frac))
    throw ValidationError("cutoff window must satisfy 0 <= lo < hi <= 1");
}

namespace {
double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// monomial coefficients of the order-N smoothstep, degree 2N+1
std::vector<double> smoothstep_coeffs(int N) {
  std::vector<double> c(2 * N + 2, 0.0);
  for (int k = 0; k <= N; ++k) c[N + 1 + k] = binom(N + k, k) * binom(2 * N + 1, N - k) * ((k % 2) ? -1.0 : 1.0);
  return c;
}
}  // namespace

ChiValue cutoff_chi_full(double x, double a_L, double a_R, const ChiProfile& p) {
  double seam_lo = -0.5 * a_L, width = 0.5 * (a_L + a_R);
  double lo = seam_lo + p.lo_frac * width, hi = seam_lo + p.hi_frac * width;
  if (x <= lo) return {1.0, 0.0, 0.0};
  if (x >= hi) return {0.0, 0.0, 0.0};
  double L = hi - lo, s = (x - lo) / L;
  auto c = smoothstep_coeffs(p.order);
  double v = 0.0, d1 = 0.0, d2 = 0.0;
  for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) {
    d2 = d2 * s + 2.0 * d1;
    d1 = d1 * s + v;
    v = v * s + c[k];
  }
  return {1.0 - v, -d1 / L, -d2 / (L * L)};
}

double cutoff_chi(double x, double a_L, double a_R, const ChiProfile& p) {
  return cutoff_chi_full(x, a_L, a_R, p).value;
}

void NuclearDensity::validate() const {
  if (!(period_a > 0.0)) throw ValidationError("nucleus.period_a must be > 0");
  if (charge_z < 1) throw ValidationError("nucleus.charge_z must be >= 1");
  if (!(bump_width > 0.0)) throw ValidationError("nucleus.bump_width must be > 0");
  if (!(support_radius > 0.0)) throw ValidationError("nucleus.support_radius must be > 0");
  if (support_radius > 0.5 * period_a) throw ValidationError("nuclear support does not fit inside the cell");
  if (bump_center_r < 0.0) throw ValidationError("nucleus.bump_center_r must be >= 0");
  if (bump_center_r > 0.0 && bump_center_r < support_radius)
    throw ValidationError("a ring-shaped nucleus must not reach the axis (bump_center_r >= support_radius)");
}

ScalarField build_nuclear_density(const NuclearDensity& spec, const CellGrid& grid) {
  spec.validate();
  grid.validate();
  if (spec.period_a != grid.period_a) throw ValidationError("nucleus period differs from grid period");
  if (spec.bump_center_r + spec.support_radius >= grid.r_max)
    throw ValidationError("nuclear support exceeds the radial grid");
  ScalarField f = ScalarField::on(grid);
  const double R2 = spec.support_radius * spec.support_radius;
  const double w2 = spec.bump_width * spec.bump_width;
  for (int i = 0; i < grid.n_x; ++i) {
    for (int t = -1; t <= 1; ++t) {
      double x = grid.x(i) - t * grid.period_a;
      for (int j = 0; j < grid.n_r; ++j) {
        double dr = grid.radial().node(j) - spec.bump_center_r;
        double d2 = x * x + dr * dr;
        if (d2 < R2) f(i, j) += std::exp(-(d2 / w2) / (1.0 - d2 / R2));
      }
    }
  }
  double total = f.integral();
  if (!(total > 0.0)) throw ValidationError("nuclear bump is not resolved by the grid");
  f *= spec.charge_z / total;
  return f;
}

PeriodicInterpolant::PeriodicInterpolant(const ScalarField& f)
    : period_(f.period), n_x_(f.n_x()), radial_(f.radial), x0_(f.x0) {
  if (f.domain != Domain::cell_periodic) throw ValidationError("periodic interpolation needs a cell field");
  modes_.resize(n_x_, f.n_r());
  for (int r = 0; r < n_x_; ++r) {
    int n = r - n_x_ / 2;
    Eigen::VectorXcd ph(n_x_);
    for (int i = 0; i < n_x_; ++i) ph(i) = std::polar(1.0 / n_x_, -2.0 * pi * n * i / n_x_);
    modes_.row(r) = (ph.transpose() * f.values.cast<cplx>());
  }
}

Eigen::VectorXd PeriodicInterpolant::eval(double x, int derivative) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(modes_.cols());
  double t = x - x0_;
  for (int r = 0; r < n_x_; ++r) {
    int n = r - n_x_ / 2;
    double k = 2.0 * pi * n / period_;
    if (r == 0) {
      // Nyquist term as a cosine so the interpolant stays real
      double c = derivative == 0 ? std::cos(k * t) : derivative == 1 ? -k * std::sin(k * t) : -k * k * std::cos(k * t);
      out += c * modes_.row(r).transpose().real();
      continue;
    }
    cplx ph = std::polar(1.0, k * t);
    cplx fac = derivative == 0 ? ph : derivative == 1 ? cplx(0.0, k) * ph : -k * k * ph;
    out += (fac * modes_.row(r).transpose()).real();
  }
  return out;
}

ScalarField PeriodicInterpolant::sample(const SupercellGrid& g, int derivative) const {
  if (!(g.radial() == radial_)) throw ValidationError("supercell radial grid differs from the material grid");
  ScalarField f = ScalarField::on(g);
  for (int i = 0; i < g.n_x; ++i) f.values.row(i) = eval(g.x(i), derivative).transpose();
  return f;
}

void write_field_csv(const ScalarField& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "x,r,value\n" << std::setprecision(17);
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) out << f.x(i) << ',' << f.radial.node(j) << ',' << f(i, j) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace qrhf
