#include "qrhf/coulomb.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "qrhf/errors.hpp"
#include "qrhf/parallel.hpp"
#include "qrhf/specfun.hpp"

namespace qrhf {

namespace {
constexpr double pi = std::numbers::pi;
using cplx = std::complex<double>;

CellGrid cell_grid_of(const ScalarField& f) {
  CellGrid g;
  g.period_a = f.period;
  g.n_x = f.n_x();
  g.r_max = f.radial.r_max;
  g.n_r = f.n_r();
  return g;
}

void require_neutral(const ScalarField& f, double tol, const char* where) {
  NeutralityReport r = neutrality_check(f, tol);
  if (!r.is_neutral)
    throw ValidationError(std::string(where) + ": charge is not neutral (cell integral " +
                          std::to_string(r.zero_mode) + ")");
}
}  // namespace

NeutralityReport neutrality_check(const ScalarField& f, double tol) {
  NeutralityReport r;
  r.tol = tol;
  r.zero_mode = f.integral();
  double abs_mass = 0.0;
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) abs_mass += std::abs(f(i, j)) * f.cell_weight(j);
  r.is_neutral = std::abs(r.zero_mode) < tol * std::max(1.0, abs_mass);
  return r;
}

double coulomb_energy_cell(const ScalarField& f, const ScalarField& g, double neutral_tol) {
  f.require_same_grid(g, "coulomb_energy_cell");
  require_neutral(f, neutral_tol, "coulomb_energy_cell");
  require_neutral(g, neutral_tol, "coulomb_energy_cell");
  MixedSpectrum F = mixed_fourier_forward(f);
  MixedSpectrum G = &f == &g ? F : mixed_fourier_forward(g);
  const RadialBasis& rb = radial_basis(f.radial, 0);
  double sum = 0.0;
  for (int r = 0; r < F.n_x; ++r) {
    double kx = 2.0 * pi * F.modes[r] / F.period;
    for (int j = 0; j < f.n_r(); ++j) {
      double k2 = rb.k2(j) + kx * kx;
      sum += 2.0 * pi * rb.hankel_weight(j) * std::real(std::conj(F.coeffs(r, j)) * G.coeffs(r, j)) / k2;
    }
  }
  return 4.0 * pi * sum;
}

Eigen::VectorXd radial_log_potential(const Eigen::VectorXd& qbar, const RadialGrid& g) {
  const int n = g.n_r;
  const double h = g.h();
  // Discrete logarithm: L_{j+1} - L_j = h / face_j, anchored to log r at the wall node. With it
  // T(r_l) = -4 pi sum_j qbar_j L(max(l, j)) r_j h inverts the finite-difference radial
  // Laplacian exactly, and is identically zero outside the support of a neutral qbar.
  Eigen::VectorXd L(n);
  L(n - 1) = std::log(g.node(n - 1));
  for (int j = n - 2; j >= 0; --j) L(j) = L(j + 1) - h / g.face(j);
  Eigen::VectorXd inner(n), outer(n);
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += qbar(j) * g.node(j) * h;
    inner(j) = acc;
  }
  acc = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    outer(j) = acc;
    acc += qbar(j) * L(j) * g.node(j) * h;
  }
  Eigen::VectorXd T(n);
  for (int l = 0; l < n; ++l) T(l) = -4.0 * pi * (L(l) * inner(l) + outer(l));
  return T;
}

ScalarField solve_periodic_potential(const ScalarField& q, double neutral_tol) {
  if (q.domain != Domain::cell_periodic) throw ValidationError("solve_periodic_potential needs a cell-periodic field");
  require_neutral(q, neutral_tol, "solve_periodic_potential");
  CellGrid grid = cell_grid_of(q);
  const RadialBasis& rb = radial_basis(q.radial, 0);
  MixedSpectrum S = mixed_fourier_forward(q);
  for (int r = 0; r < S.n_x; ++r) {
    if (S.modes[r] == 0) {
      S.coeffs.row(r).setZero();
      continue;
    }
    double kx = 2.0 * pi * S.modes[r] / S.period;
    for (int j = 0; j < q.n_r(); ++j) S.coeffs(r, j) *= 4.0 * pi / (rb.k2(j) + kx * kx);
  }
  ScalarField V = mixed_fourier_inverse(S, grid);
  Eigen::VectorXd qbar = q.values.colwise().mean().transpose();
  Eigen::VectorXd T = radial_log_potential(qbar, q.radial);
  for (int i = 0; i < V.n_x(); ++i) V.values.row(i) += T.transpose();
  return V;
}

// ---------------------------------------------------------------------------------------------
// Free-space Coulomb

namespace {

// Angle-integrated 1/|X - Y| between rings at (0, r) and (dx, rp).
double ring_kernel(double dx, double r, double rp) {
  double s = dx * dx + (r + rp) * (r + rp);
  double m = 4.0 * r * rp / s;
  if (m >= 1.0) m = std::nextafter(1.0, 0.0);
  return 4.0 * specfun::elliptic_k(m) / std::sqrt(s);
}

// int over [x0, x1] x [r0, r1] of rp * kernel(x, r, rp), target ring at (0, r), tensor Gauss.
double cell_quad(double r, double x0, double x1, double r0, double r1, const specfun::GaussRule& g) {
  double cx = 0.5 * (x0 + x1), hx = 0.5 * (x1 - x0);
  double cr = 0.5 * (r0 + r1), hr = 0.5 * (r1 - r0);
  double s = 0.0;
  for (size_t a = 0; a < g.nodes.size(); ++a)
    for (size_t b = 0; b < g.nodes.size(); ++b) {
      double xp = cx + hx * g.nodes[a], rp = cr + hr * g.nodes[b];
      s += g.weights[a] * g.weights[b] * rp * ring_kernel(xp, r, rp);
    }
  return s * hx * hr;
}

// Same integral when the target (0, r) is a corner of the rectangle [0, X] x [r, r + R]
// (X, R signed). Split into two triangles and remove the corner singularity with a Duffy map.
double corner_quad(double r, double X, double R, const specfun::GaussRule& g) {
  double s = 0.0;
  for (int tri = 0; tri < 2; ++tri) {
    for (size_t a = 0; a < g.nodes.size(); ++a) {
      double u = 0.5 * (1.0 + g.nodes[a]);
      double wu = 0.5 * g.weights[a];
      for (size_t b = 0; b < g.nodes.size(); ++b) {
        double v = 0.5 * (1.0 + g.nodes[b]);
        double wv = 0.5 * g.weights[b];
        double xp, dr;
        if (tri == 0) {  // (0,0), (X,0), (X,R)
          xp = u * X;
          dr = u * v * R;
        } else {  // (0,0), (0,R), (X,R)
          dr = u * R;
          xp = u * v * X;
        }
        double rp = r + dr;
        s += wu * wv * u * rp * ring_kernel(xp, r, rp);
      }
    }
  }
  return s * std::abs(X * R);
}

struct FftwPlanLock {
  static std::mutex& get() {
    static std::mutex m;
    return m;
  }
};

}  // namespace

struct FreeCoulombSolver::Impl {
  SupercellGrid grid;
  int n_fft = 0;   // circulant length
  int n_freq = 0;  // n_fft / 2 + 1
  // kernel_hat[w] is the (n_r x n_r) matrix of transformed kernels at frequency w
  std::vector<Eigen::MatrixXcd> kernel_hat;
};

FreeCoulombSolver::FreeCoulombSolver(const SupercellGrid& grid) : impl_(std::make_unique<Impl>()) {
  grid.validate();
  Impl& I = *impl_;
  I.grid = grid;
  const int nx = grid.n_x, nr = grid.n_r;
  const double dx = grid.dx(), h = grid.radial().h();
  const RadialGrid rg = grid.radial();

  // W(d, j, jp): potential at (x_d, r_j) of unit density on cell (0, jp).
  std::vector<Eigen::MatrixXd> W(nx, Eigen::MatrixXd(nr, nr));
  specfun::GaussRule g8 = specfun::gauss_legendre(8);
  specfun::GaussRule g16 = specfun::gauss_legendre(16);
  parallel_for(nx, [&](int d) {
    for (int j = 0; j < nr; ++j) {
      double r = rg.node(j);
      for (int jp = 0; jp < nr; ++jp) {
        double rp = rg.node(jp);
        double r0 = rp - 0.5 * h, r1 = rp + 0.5 * h;
        double val;
        if (d == 0 && jp == j) {
          double hx = 0.5 * dx;
          val = 2.0 * (corner_quad(r, hx, 0.5 * h, g16) + corner_quad(r, hx, -0.5 * h, g16));
        } else if (d <= 2 && std::abs(jp - j) <= 2) {
          double x0 = d * dx - 0.5 * dx, x1 = d * dx + 0.5 * dx;
          if (d == 0) {  // split at x = 0 where the kernel peaks
            val = 2.0 * cell_quad(r, 0.0, x1, r0, r1, g8);
          } else {
            val = cell_quad(r, x0, x1, r0, r1, g8);
          }
        } else {
          val = dx * h * rp * ring_kernel(d * dx, r, rp);
        }
        W[d](j, jp) = val;
      }
    }
  });

  // Circulant embedding for linear convolution over offsets -(nx-1) .. nx-1.
  I.n_fft = 2 * nx;
  I.n_freq = I.n_fft / 2 + 1;
  I.kernel_hat.assign(I.n_freq, Eigen::MatrixXcd(nr, nr));
  std::vector<double> buf(I.n_fft);
  std::vector<fftw_complex> out(I.n_freq);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(FftwPlanLock::get());
    plan = fftw_plan_dft_r2c_1d(I.n_fft, buf.data(), out.data(), FFTW_ESTIMATE);
  }
  for (int j = 0; j < nr; ++j)
    for (int jp = 0; jp < nr; ++jp) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (int d = 0; d < nx; ++d) buf[d] = W[d](j, jp);
      for (int d = 1; d < nx; ++d) buf[I.n_fft - d] = W[d](j, jp);
      fftw_execute(plan);
      for (int w = 0; w < I.n_freq; ++w) I.kernel_hat[w](j, jp) = cplx(out[w][0], out[w][1]);
    }
  std::lock_guard<std::mutex> lock(FftwPlanLock::get());
  fftw_destroy_plan(plan);
}

FreeCoulombSolver::~FreeCoulombSolver() = default;

const SupercellGrid& FreeCoulombSolver::grid() const { return impl_->grid; }

ScalarField FreeCoulombSolver::potential(const ScalarField& f, BoundaryReport* report) const {
  const Impl& I = *impl_;
  ScalarField V = ScalarField::on(I.grid);
  bool match = f.domain == Domain::supercell && f.n_x() == V.n_x() && f.n_r() == V.n_r() &&
               f.radial == V.radial && std::abs(f.dx - V.dx) < 1e-12 && std::abs(f.x0 - V.x0) < 1e-12;
  if (!match) throw ValidationError("free_coulomb_potential: field is not on the solver grid");
  V.x0 = f.x0;
  V.dx = f.dx;
  if (report) *report = boundary_report(f);
  const int nx = I.grid.n_x, nr = I.grid.n_r;
  std::vector<double> buf(I.n_fft);
  std::vector<fftw_complex> spec(I.n_freq);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(FftwPlanLock::get());
    fwd = fftw_plan_dft_r2c_1d(I.n_fft, buf.data(), spec.data(), FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(I.n_fft, spec.data(), buf.data(), FFTW_ESTIMATE);
  }
  Eigen::MatrixXcd F(I.n_freq, nr);
  for (int j = 0; j < nr; ++j) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < nx; ++i) buf[i] = f(i, j);
    fftw_execute(fwd);
    for (int w = 0; w < I.n_freq; ++w) F(w, j) = cplx(spec[w][0], spec[w][1]);
  }
  Eigen::MatrixXcd G(I.n_freq, nr);
  for (int w = 0; w < I.n_freq; ++w) G.row(w) = (I.kernel_hat[w] * F.row(w).transpose()).transpose();
  for (int j = 0; j < nr; ++j) {
    for (int w = 0; w < I.n_freq; ++w) {
      spec[w][0] = G(w, j).real();
      spec[w][1] = G(w, j).imag();
    }
    fftw_execute(bwd);
    for (int i = 0; i < nx; ++i) V(i, j) = buf[i] / I.n_fft;
  }
  std::lock_guard<std::mutex> lock(FftwPlanLock::get());
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(bwd);
  return V;
}

double FreeCoulombSolver::energy(const ScalarField& f, const ScalarField& g) const {
  return f.inner(potential(g));
}

const FreeCoulombSolver& free_coulomb_solver(const SupercellGrid& grid) {
  static std::mutex mtx;
  static std::map<std::tuple<long long, int, double, int>, std::unique_ptr<FreeCoulombSolver>> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_tuple(std::llround(grid.half_length * 1e9), grid.n_x, grid.r_max, grid.n_r);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;
  auto s = std::make_unique<FreeCoulombSolver>(grid);
  auto& ref = *s;
  cache.emplace(key, std::move(s));
  return ref;
}

namespace {
SupercellGrid supercell_grid_of(const ScalarField& f) {
  if (f.domain != Domain::supercell) throw ValidationError("free-space Coulomb needs a supercell field");
  SupercellGrid g;
  g.n_x = f.n_x();
  g.half_length = f.dx - f.x0;
  g.r_max = f.radial.r_max;
  g.n_r = f.n_r();
  return g;
}
}  // namespace

ScalarField free_coulomb_potential(const ScalarField& f, BoundaryReport* report) {
  return free_coulomb_solver(supercell_grid_of(f)).potential(f, report);
}

double coulomb_energy_free(const ScalarField& f, const ScalarField& g) {
  f.require_same_grid(g, "coulomb_energy_free");
  return free_coulomb_solver(supercell_grid_of(f)).energy(f, g);
}

BoundaryReport boundary_report(const ScalarField& f, double rel_tol) {
  BoundaryReport r;
  const int nx = f.n_x(), nr = f.n_r();
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nr; ++j) {
      double m = std::abs(f(i, j)) * f.cell_weight(j);
      r.total_mass += m;
      if (i == 0 || i == nx - 1 || j == nr - 1) r.boundary_mass += m;
    }
  r.decayed = r.boundary_mass <= rel_tol * std::max(r.total_mass, 1e-300);
  return r;
}

ScalarField greens_cell_field(const CellGrid& g, int quad_points) {
  g.validate();
  if (g.period_a != 1.0) throw ValidationError("greens_cell_field: the lattice Green's function has period 1");
  if (quad_points < 1) throw ValidationError("greens_cell_field: quad_points must be >= 1");
  const specfun::GaussRule gl = specfun::gauss_legendre(quad_points);
  const RadialGrid rg = g.radial();
  const double shift = 2.0 * std::log(rg.r_max), dx = g.dx(), h = rg.h();
  ScalarField f = ScalarField::on(g);
  // G is even in x; nodes i and n_x - i mirror each other about x = 0
  const int half = g.n_x / 2;
  parallel_for(half + 1, [&](int i) {
    for (int j = 0; j < rg.n_r; ++j) {
      double s = 0.0, w = 0.0;
      for (int a = 0; a < quad_points; ++a)
        for (int b = 0; b < quad_points; ++b) {
          double x = g.x(i) + 0.5 * dx * gl.nodes[a], r = rg.node(j) + 0.5 * h * gl.nodes[b];
          double wt = gl.weights[a] * gl.weights[b] * r;
          s += wt * specfun::greens(x, r);
          w += wt;
        }
      f(i, j) = s / w + shift;
      int mirror = (g.n_x - i) % g.n_x;
      if (mirror != i && mirror < g.n_x) f(mirror, j) = f(i, j);
    }
  });
  return f;
}

}  // namespace qrhf
