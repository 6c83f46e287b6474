#pragma once

#include <memory>

#include "qrhf/fields.hpp"

namespace qrhf {

struct NeutralityReport {
  double zero_mode = 0.0;  // cell integral of f
  bool is_neutral = true;
  double tol = 1e-8;
};

// Neutral when |integral| < tol * max(1, integral of |f|).
NeutralityReport neutrality_check(const ScalarField& f, double tol = 1e-8);

// Per-cell Coulomb form by spectral quadrature; both arguments must be neutral.
double coulomb_energy_cell(const ScalarField& f, const ScalarField& g, double neutral_tol = 1e-8);

// Periodic mean-field potential of a neutral charge q: spectral for x-modes n != 0, radial log
// kernel for the x-average.
ScalarField solve_periodic_potential(const ScalarField& q, double neutral_tol = 1e-8);

// The x-average part alone: T(r) = -4 pi int qbar(r') log(max(r, r')) r' dr'.
Eigen::VectorXd radial_log_potential(const Eigen::VectorXd& qbar, const RadialGrid& g);

// Cell averages (weight r dr dx, Gauss rule of `quad_points`^2 nodes per cell) of G + 2 log r_max on a
// unit-period grid. The shift makes the x-average vanish at r_max, so its discrete Hankel transform on
// the Dirichlet wavenumbers carries no boundary term.
ScalarField greens_cell_field(const CellGrid& g, int quad_points = 4);

struct BoundaryReport {
  double boundary_mass = 0.0;  // integral of |f| over the outermost x planes and radial ring
  double total_mass = 0.0;
  bool decayed = true;
};

// Free-space Coulomb potential of axially symmetric densities on a fixed supercell grid.
// The ring-kernel cell integrals are tabulated once per grid; applying is an FFT convolution in x.
class FreeCoulombSolver {
 public:
  explicit FreeCoulombSolver(const SupercellGrid& grid);
  ~FreeCoulombSolver();
  FreeCoulombSolver(const FreeCoulombSolver&) = delete;
  FreeCoulombSolver& operator=(const FreeCoulombSolver&) = delete;

  const SupercellGrid& grid() const;
  ScalarField potential(const ScalarField& f, BoundaryReport* report = nullptr) const;
  double energy(const ScalarField& f, const ScalarField& g) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Shared solver for the grid (built on first use, cached).
const FreeCoulombSolver& free_coulomb_solver(const SupercellGrid& grid);

ScalarField free_coulomb_potential(const ScalarField& f, BoundaryReport* report = nullptr);
double coulomb_energy_free(const ScalarField& f, const ScalarField& g);

BoundaryReport boundary_report(const ScalarField& f, double rel_tol = 1e-6);

}  // namespace qrhf
