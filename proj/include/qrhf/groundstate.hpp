#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qrhf/fields.hpp"
#include "qrhf/operators.hpp"

namespace qrhf {

struct BandOptions {
  int n_pw = -1;  // plane-wave window, default n_x / 4
  LobpcgOptions solver;
};

// Eigenpairs of one representative fiber (xi index k, channel m).
struct FiberBands {
  int k = 0;
  int m = 0;
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
  Eigen::MatrixXcd block;  // warm-start seed
};

// Bands over all Brillouin samples. Only xi_k with k <= n_xi / 2 are diagonalised: xi_{n_xi - k}
// = -xi_k carries the same spectrum and conjugate eigenvectors.
struct BandStructure {
  CellGrid grid;
  int n_pw = 0;
  double e_cap = 0.5;
  std::vector<double> xis;
  std::vector<int> channels;
  std::vector<FiberBands> fibers;  // representatives, index rep * (m_max + 1) + m

  int n_reps() const { return grid.n_xi / 2 + 1; }
  int rep_of(int k) const { return k <= grid.n_xi / 2 ? k : grid.n_xi - k; }
  // number of xi samples represented by representative r
  int multiplicity(int r) const;
  static double channel_weight(int m) { return m == 0 ? 1.0 : 2.0; }
  const FiberBands& fiber(int rep, int m) const { return fibers[rep * (grid.m_max + 1) + m]; }
  const Eigen::VectorXd& values(int k, int m) const { return fiber(rep_of(k), m).values; }
};

BandStructure band_structure(const ScalarField& V, const CellGrid& grid, double e_cap, const BandOptions& opt = {},
                             const BandStructure* warm = nullptr);

// F(kappa) = (1/N_xi) sum_xi sum_m weight(m) #{n : lambda_n(xi, m) <= kappa}
double counting_function(const BandStructure& bands, double kappa);

// strict: negative levels only, integer occupations (errors otherwise).
// aufbau: lowest Z * N_xi pooled levels of the boxed problem, positive or not; a degenerate group
// straddling the boundary is shared equally. Diagnostic mode for under-sized radial boxes.
enum class FermiPolicy { strict, aufbau };

struct FermiLevel {
  double fermi = 0.0;
  double homo = 0.0;  // Z * N_xi-th pooled level
  double lumo = 0.0;  // next pooled level (cap if none is stored)
  bool split = false;          // aufbau only: boundary group partially occupied
  double group_energy = 0.0;   // energy of the split group
  double group_fraction = 1.0; // occupation of each member of the split group
  double group_tol = 0.0;

  double occupation(double lambda) const;
};

FermiLevel fermi_level(const BandStructure& bands, int target_z, double degeneracy_tol = 1e-8,
                       FermiPolicy policy = FermiPolicy::strict);
double fermi_bisect(const BandStructure& bands, int target_z);

ScalarField density_from_projector(const BandStructure& bands, double fermi, const CellGrid& grid);
ScalarField density_from_projector(const BandStructure& bands, const FermiLevel& fermi, const CellGrid& grid);

struct EnergyComponents {
  double kinetic = 0.0;
  double coulomb = 0.0;
  double total = 0.0;
};

struct ScfLogEntry {
  int iter = 0;
  double residual = 0.0;
  double fermi = 0.0;
  double energy = 0.0;
};

struct ScfOptions {
  int charge_z = 1;
  double mix_beta = 0.3;
  double tol = 1e-7;
  int max_iter = 150;
  int anderson_depth = 5;  // 0: plain linear mixing
  double e_cap = 0.5;
  FermiPolicy fermi_policy = FermiPolicy::strict;
  BandOptions bands;
  std::function<void(const ScfLogEntry&)> on_iteration;
};

struct GroundState {
  CellGrid grid;
  int charge_z = 1;
  ScalarField density;    // projector density at the final potential
  ScalarField potential;  // mean-field potential the bands were computed in
  double fermi_level = 0.0;
  double homo = 0.0, lumo = 0.0;
  FermiLevel fermi;
  double negative_count = 0.0;  // F(0)
  double energy_kinetic = 0.0;
  double energy_coulomb = 0.0;
  double scf_residual = 0.0;
  int iterations = 0;
  std::vector<ScfLogEntry> history;
  BandStructure bands;
  std::vector<std::vector<int>> occupations;  // [xi index][m] occupied level count
};

enum class InitialGuess { mu_shaped, uniform };
ScalarField initial_density(const ScalarField& mu, const CellGrid& grid, int charge_z, InitialGuess kind);

GroundState scf_solve(const ScalarField& mu, const CellGrid& grid, const ScfOptions& opt,
                      const ScalarField* rho0 = nullptr);

// Projector state for a given potential: bands, Fermi level, density and occupations.
GroundState projector_state(const ScalarField& V, const ScalarField& mu, const CellGrid& grid, const ScfOptions& opt,
                            const BandStructure* warm = nullptr);

// A periodic material: its ground state together with the (possibly fictitious) nuclear density.
struct PeriodicMaterial {
  GroundState state;
  ScalarField mu;
};

PeriodicMaterial scf_material(const NuclearDensity& nuclei, const CellGrid& grid, const ScfOptions& opt);

// Exact fixed point by construction: V solves the periodic Poisson problem for the neutral charge q,
// rho is the projector density of V, and mu := rho - q. The Fermi rule of opt applies; opt.charge_z
// is the electron count per cell.
// contrast * (G - N): N the nuclear bump, G = exp(-r^2 / width^2) carrying the same charge per cell.
ScalarField designed_charge(const NuclearDensity& nuclei, const CellGrid& grid, double contrast, double width);
PeriodicMaterial designed_material(const ScalarField& q, const CellGrid& grid, const ScfOptions& opt);

EnergyComponents total_energy(const GroundState& state, const ScalarField& mu);

// Occupation-weighted expectation of -1/2 Delta_xi over the occupied states of `bands`.
double kinetic_energy(const BandStructure& bands, const ScalarField& V, double fermi);
double kinetic_energy(const BandStructure& bands, const ScalarField& V, const FermiLevel& fermi);

struct HoffmannOstenhof {
  double gradient_sqrt_rho = 0.0;  // int |grad sqrt(rho)|^2, finite differences
  double kinetic_trace = 0.0;      // Tr(-Delta gamma) = 2 * kinetic energy
  bool holds = false;
};
HoffmannOstenhof hoffmann_ostenhof_check(const ScalarField& rho, double kinetic_energy);

struct DecayFit {
  double rate = 0.0;
  double r2 = 0.0;
  double r_start = 0.0, r_end = 0.0;
  int points = 0;
  bool window_shrunk = false;
};
// Log-linear fit of max_x f(x, r) on fit_start_r < r < end_frac * r_max.
DecayFit decay_fit(const ScalarField& f, double fit_start_r, double end_frac = 0.8);

// int |r| rho over the cell
double radial_moment(const ScalarField& rho);

}  // namespace qrhf
