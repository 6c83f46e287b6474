#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <functional>

#include "qrhf/fields.hpp"

namespace qrhf {

using cplx = std::complex<double>;

// Bloch fiber H_{xi,m} = 1/2 (2 pi n / a + xi)^2 + 1/2 (order-m radial operator) + V on plane waves
// |n| <= n_pw times the radial grid. Coefficient vectors are ordered (mode, radial node) with the
// radial index fastest; v_{n,j} = sqrt(a w_j) c_{n,j} makes the basis orthonormal, where the
// periodic part is u(x, r_j) = sum_n c_{n,j} exp(2 pi i n x / a).
struct BlochFiber {
  double xi = 0.0;
  int m = 0;
  double period = 1.0;
  int n_pw = 0;
  int n_x = 0;
  RadialGrid radial;
  RadialOperator radial_op;  // order-m radial operator (not halved)
  Eigen::VectorXd kx;        // 2 pi n / a + xi per mode
  Eigen::MatrixXd v_t;       // potential samples, (n_r, n_x)
  Eigen::MatrixXcd phase;    // (n_modes, n_x): exp(2 pi i n x_i / a)
  double v_min = 0.0, v_max = 0.0;

  int n_modes() const { return 2 * n_pw + 1; }
  int basis_dim() const { return n_modes() * radial.n_r; }

  void apply(const Eigen::MatrixXcd& X, Eigen::MatrixXcd& Y) const;
  Eigen::MatrixXcd matrix() const;
  // Block-diagonal kinetic preconditioner (1/2 kx^2 + 1/2 radial + shift)^{-1}.
  void precondition(const Eigen::MatrixXcd& R, double shift, Eigen::MatrixXcd& out) const;
  // Periodic part u(x_i, r_j) on the cell grid, (n_x, n_r).
  Eigen::MatrixXcd to_grid(const Eigen::VectorXcd& v) const;
  // <v| -1/2 Delta_xi |v>
  double kinetic(const Eigen::VectorXcd& v) const;
};

// Default plane-wave window: n_x / 4.
BlochFiber assemble_bloch_fiber(const ScalarField& V, double xi, int m, const CellGrid& grid, int n_pw = -1);

struct LobpcgOptions {
  int max_iter = 400;
  double tol = 1e-9;  // residual 2-norm
  unsigned seed = 1;
};

struct EigenResult {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
  int iterations = 0;
  double max_residual = 0.0;
  Eigen::MatrixXcd block;  // full iteration block (includes levels above the cap); warm-start seed
};

// Eigenpairs of the fiber with eigenvalue <= e_cap. Uses dense diagonalisation for small bases and
// block LOBPCG otherwise; `warm` (columns) seeds the iteration.
EigenResult fiber_eigenpairs(const BlochFiber& H, double e_cap, const Eigen::MatrixXcd* warm = nullptr,
                             const LobpcgOptions& opt = {});

// Canonical gauge: the first largest-magnitude component of each column is made real positive.
void fix_gauge(Eigen::MatrixXcd& vectors);
void fix_gauge(Eigen::MatrixXd& vectors);

// Supercell Hamiltonian of one angular channel: finite differences in x (Dirichlet at +-L) and r
// (Dirichlet at r_max). Unknown (i, j) sits at index i * n_r + j; coordinates v = sqrt(dx w_j) u.
struct SupercellOperator {
  SupercellGrid grid;
  int m = 0;
  Eigen::SparseMatrix<double> matrix;
  double v_min = 0.0;

  int dim() const { return static_cast<int>(matrix.rows()); }
  // Field |u|^2 of a normalised coefficient vector.
  ScalarField density_of(const Eigen::VectorXd& v) const;
};

SupercellOperator assemble_supercell(const ScalarField& V, int m, const SupercellGrid& grid);

// Number of eigenvalues strictly below e (inertia of an LDL^T factorisation).
int count_below(const SupercellOperator& H, double e);

struct SupercellSpectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns, gauge-fixed
};

// All eigenpairs with eigenvalue in [lower, upper] (shift-invert Lanczos, or dense for small dims).
SupercellSpectrum supercell_eigenpairs(const SupercellOperator& H, double lower, double upper);

struct KssResult {
  double lhs = 0.0;
  double rhs = 0.0;
};

// Hilbert-Schmidt norm of f(-i grad_xi) g on the discrete fiber space (all x-modes of the cell
// grid, all radial states of channels |m| <= m_max), and the bound
// (2 pi)^{-1} a^{-1/2} ||g|| (sum_n ||f(2 pi n / a + xi, .)||^2_{L2(R^2)})^{1/2}.
KssResult kss_hs_check(const std::function<double(double p, double k)>& f, const ScalarField& g, double xi,
                       int m_max);

}  // namespace qrhf
