#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

namespace qrhf {

// Cell-centred radial nodes r_j = (j + 1/2) h, h = r_max / n_r; Dirichlet wall at r_max.
struct RadialGrid {
  double r_max = 12.0;
  int n_r = 128;

  double h() const { return r_max / n_r; }
  double node(int j) const { return (j + 0.5) * h(); }
  double face(int j) const { return (j + 1) * h(); }  // outer face of cell j
  double weight(int j) const;                           // 2 pi r_j h
  bool operator==(const RadialGrid& o) const { return r_max == o.r_max && n_r == o.n_r; }
};

struct CellGrid {
  double period_a = 1.0;
  int n_x = 32;
  double r_max = 12.0;
  int n_r = 128;
  int m_max = 4;
  int n_xi = 16;

  RadialGrid radial() const { return {r_max, n_r}; }
  double dx() const { return period_a / n_x; }
  double x(int i) const { return -0.5 * period_a + i * dx(); }
  // Brillouin samples on [-pi/a, pi/a), endpoint excluded.
  double xi(int k) const;
  void validate() const;
  bool operator==(const CellGrid& o) const;
};

// Box [-L, L] with Dirichlet walls; n_x interior nodes x_i = -L + (i + 1) dx.
struct SupercellGrid {
  double half_length = 12.0;
  int n_x = 383;
  double r_max = 8.0;
  int n_r = 64;

  RadialGrid radial() const { return {r_max, n_r}; }
  double dx() const { return 2.0 * half_length / (n_x + 1); }
  double x(int i) const { return -half_length + (i + 1) * dx(); }
  void validate() const;
  bool operator==(const SupercellGrid& o) const;
  // Grid with spacing close to `dx_target`.
  static SupercellGrid with_spacing(double half_length, double dx_target, RadialGrid radial);
};

enum class Domain { cell_periodic, supercell };

struct ScalarField {
  Domain domain = Domain::cell_periodic;
  double x0 = 0.0;       // first x node
  double dx = 1.0;
  double period = 0.0;   // cell length (cell-periodic fields only)
  RadialGrid radial;
  Eigen::MatrixXd values;  // (n_x, n_r)

  static ScalarField on(const CellGrid& g);
  static ScalarField on(const SupercellGrid& g);

  int n_x() const { return static_cast<int>(values.rows()); }
  int n_r() const { return static_cast<int>(values.cols()); }
  double x(int i) const { return x0 + i * dx; }
  double& operator()(int i, int j) { return values(i, j); }
  double operator()(int i, int j) const { return values(i, j); }

  double cell_weight(int j) const { return dx * radial.weight(j); }
  double integral() const;
  double l2_norm() const;
  double inner(const ScalarField& o) const;
  bool same_grid(const ScalarField& o) const;
  void require_same_grid(const ScalarField& o, const char* where) const;

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(double s);
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);

// Orthonormal eigenbasis of the order-m radial operator -(1/r)(r u')' + m^2/r^2 on the grid,
// in symmetrised coordinates s_j = sqrt(2 pi r_j h) u_j. Columns sorted by eigenvalue.
struct RadialBasis {
  RadialGrid grid;
  int m = 0;
  Eigen::VectorXd k2;       // eigenvalues (discrete k^2)
  Eigen::MatrixXd vectors;  // (n_r, n_r), columns orthonormal
  Eigen::VectorXd k;        // Fourier-Bessel wavenumbers j_{0,c} / r_max paired with column c
  Eigen::VectorXd hankel_weight;  // w_j in  int F(k) J0(k r) k dk ~ sum_j w_j F_j J0(k_j r)
};
const RadialBasis& radial_basis(const RadialGrid& g, int m = 0);

// Symmetric tridiagonal radial operator (diag, off) in symmetrised coordinates, Dirichlet at r_max.
struct RadialOperator {
  Eigen::VectorXd diag;
  Eigen::VectorXd off;  // off(j) couples j and j+1
};
RadialOperator radial_laplacian(const RadialGrid& g, int m);

struct MixedSpectrum {
  double period = 1.0;
  int n_x = 0;
  RadialGrid radial;
  std::vector<int> modes;   // x-mode n for each row, -n_x/2 .. n_x/2 - 1
  Eigen::VectorXd k_grid;   // radial wavenumbers
  Eigen::MatrixXcd coeffs;  // (n_x, n_r)

  int row_of(int n) const;  // row index of mode n
  std::complex<double> at(int n, int j) const { return coeffs(row_of(n), j); }
};

MixedSpectrum mixed_fourier_forward(const ScalarField& f);
ScalarField mixed_fourier_inverse(const MixedSpectrum& s, const CellGrid& grid);

// Cutoff profile: generalized smoothstep of regularity order `order` (C^order) on the window
// [lo, hi] of the seam [-a_L/2, a_R/2], given as fractions of the seam width.
struct ChiProfile {
  int order = 2;
  double lo_frac = 0.0;
  double hi_frac = 1.0;
  void validate() const;
};
struct ChiValue {
  double value, d1, d2;
};
ChiValue cutoff_chi_full(double x, double a_L, double a_R, const ChiProfile& p);
double cutoff_chi(double x, double a_L, double a_R, const ChiProfile& p);

struct NuclearDensity {
  double period_a = 1.0;
  int charge_z = 1;
  double bump_center_r = 0.0;  // ring radius of the smeared charge (0: on the axis)
  double bump_width = 0.3;     // Gaussian core width inside the mollifier
  double support_radius = 0.45;
  void validate() const;
};

// Smooth bump exp(-(d/w)^2 / (1 - (d/R)^2)) around the ring, normalised on the grid to Z per cell.
ScalarField build_nuclear_density(const NuclearDensity& spec, const CellGrid& grid);

// Periodic (trigonometric) interpolation of a cell field and its x-derivatives at arbitrary x.
class PeriodicInterpolant {
 public:
  explicit PeriodicInterpolant(const ScalarField& cell_field);
  // derivative order 0, 1 or 2; returns values for all radial nodes
  Eigen::VectorXd eval(double x, int derivative = 0) const;
  // Sample onto the radial nodes of a supercell grid (radial grids must coincide).
  ScalarField sample(const SupercellGrid& g, int derivative = 0) const;

 private:
  double period_;
  int n_x_;
  RadialGrid radial_;
  Eigen::MatrixXcd modes_;  // (n_x, n_r): coefficient of exp(2 pi i n (x - x0) / a)
  double x0_;
};

// CSV with columns x, r, value.
void write_field_csv(const ScalarField& f, const std::string& path);

}  // namespace qrhf
