#pragma once

#include <vector>

namespace qrhf::specfun {

struct GreensEvalConfig {
  int series_terms = 2000;   // cap on the K0 series length (stops earlier once converged)
  int lattice_terms = 64;    // |n| <= lattice_terms in the real-space sum
  int quad_points = 24;      // Gauss-Legendre nodes per panel for cell integrals
  double tol = 1e-15;        // absolute size of the first omitted series term
  double radial_box = 4.0;   // radial truncation for cell integrals
  double r_switch = 0.05;    // below this radius the lattice form is used

  void validate() const;
};

double bessel_k0(double alpha);
double elliptic_k(double m);

double greens_series(double x, double r, const GreensEvalConfig& cfg = {});
double greens_lattice(double x, double r, const GreensEvalConfig& cfg = {});

// G̃ = G + 2 log r, picking the representation by r_switch.
double greens_tilde(double x, double r, const GreensEvalConfig& cfg = {});
double greens(double x, double r, const GreensEvalConfig& cfg = {});

// Number of series terms actually used at radius r (for remainder estimates).
int greens_series_length(double r, const GreensEvalConfig& cfg = {});

double greens_tilde_cell_mean(const GreensEvalConfig& cfg = {});

// Bessel J0 zeros j_{0,1} < j_{0,2} < ...
std::vector<double> bessel_j0_zeros(int count);

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};
GaussRule gauss_legendre(int n);

}  // namespace qrhf::specfun
