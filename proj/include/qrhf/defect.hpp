#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qrhf/junction.hpp"

namespace qrhf {

// One angular channel of the space Q acts on: an orthonormal basis B of box vectors together with
// B^T H_chi B and B^T gamma_chi B. The window space uses H_chi eigenvectors, so both are diagonal.
struct ActiveChannel {
  int m = 0;
  Eigen::MatrixXd vectors;  // (box dim, n), orthonormal
  Eigen::MatrixXd h;        // H_chi in the basis
  Eigen::MatrixXd gamma;    // gamma_chi in the basis; a projector because gamma_chi maps span B into itself
  Eigen::VectorXd values;   // H_chi eigenvalues (window space only), ascending
  int n_occ = 0;            // rank of gamma
  int size() const { return static_cast<int>(vectors.cols()); }
};

struct ActiveSpace {
  SupercellGrid grid;
  double fermi_level = 0.0;
  double occupied_top = 0.0;  // highest H_chi level below eps_F (whole box)
  double e_floor = 0.0, e_ceil = 0.0;
  std::vector<ActiveChannel> channels;

  int n_occ() const;
  int n_virt() const;
  double occupied_weight() const;  // channel-weighted occupied count
  // max over channels of max |B^T B - I|
  double orthonormality_error() const;
};

// Throws ValidationError when the window leaves the occupied or the virtual side empty.
ActiveSpace build_active_space(const ReferenceState& ref, double e_floor, double e_ceil);

// Density of a symmetric matrix per channel, sum_m w_m rho(Q_m), on the box.
ScalarField density_of(const ActiveSpace& as, const std::vector<Eigen::MatrixXd>& q);

struct DefectEnergy {
  double kinetic = 0.0;      // Tr_gamma(H_chi Q), through |lambda - kappa| weights plus kappa Tr_gamma(Q)
  double cross = 0.0;        // -D(rho_Q, nu)
  double self = 0.0;         // 1/2 D(rho_Q, rho_Q)
  double energy = 0.0;       // E_chi(Q)
  double trace_gamma = 0.0;  // Tr(Q++) + Tr(Q--), channel-weighted
  double objective = 0.0;    // E_chi(Q) - kappa Tr_gamma(Q)
};

// kappa must lie strictly between the highest occupied H_chi level and eps_F (DomainError otherwise).
DefectEnergy defect_energy(const std::vector<Eigen::MatrixXd>& q, const ScalarField& rho_q, const ActiveSpace& as,
                           const ScalarField& nu, double kappa);

struct DefectLogEntry {
  int iter = 0;
  double residual = 0.0;
  double objective = 0.0;        // at the midgap kappa
  double constraint_violation = 0.0;  // distance of spec(gamma + Q) from [0, 1]
};

enum class DefectSpace {
  window,  // H_chi eigenvectors with eigenvalues in [E_floor, E_ceil]
  full,    // every box state: the occupied projector of H_chi + W is recomputed on the whole box
};

struct DefectOptions {
  double mix = 0.3;
  double tol = 1e-8;
  int max_iter = 200;
  int anderson_depth = 5;
  double degeneracy_tol = 1e-9;
  unsigned seed = 0;          // 0: start from Q = 0; otherwise a random admissible Q_0
  double start_angle = 0.3;   // rotation size of the random start
  std::function<void(const DefectLogEntry&)> on_iteration;
  void validate() const;
};

struct DefectState {
  std::vector<Eigen::MatrixXd> q;       // per channel, in the basis of the ActiveSpace channel
  std::vector<Eigen::VectorXd> levels;  // occupied-side eigenvalues of H_chi + W per channel (window: all)
  ScalarField density;                  // rho_Q
  double trace_gamma = 0.0;
  double kappa = 0.0;  // midgap value used for `energy`
  DefectEnergy energy;
  double residual = 0.0;
  int iterations = 0;
  std::vector<DefectLogEntry> history;
};

// Fixed point Q = 1(H_chi + (rho_Q - nu) * |x|^-1 < eps_F) - gamma_chi in the active space, with
// Anderson mixing on rho_Q.
DefectState minimize_defect(const ActiveSpace& as, const ScalarField& nu, const DefectOptions& opt);

// The same fixed point without truncation: each iterate diagonalizes H_chi + W on the whole box
// below eps_F. Q is returned in the basis spanned by the old and new occupied states, which is
// written to `space`.
DefectState minimize_defect_full(const ReferenceState& ref, const ScalarField& nu, const DefectOptions& opt,
                                 ActiveSpace& space);

struct ProjectedGradientOptions {
  int max_iter = 5000;
  double tol = 1e-9;  // gradient-mapping norm
};
// Direct minimization of E_chi(Q) - kappa Tr_gamma(Q) over 0 <= gamma + Q <= 1 by projected gradient
// steps with backtracking. Used to cross-check the fixed point on small active spaces.
DefectState minimize_defect_projected(const ActiveSpace& as, const ScalarField& nu, double kappa,
                                      const ProjectedGradientOptions& opt = {});

struct DefectChecks {
  double constraint_min = 0.0, constraint_max = 0.0;  // spectrum of gamma + Q
  double qpp_min = 0.0;  // smallest eigenvalue of Q++
  double qmm_max = 0.0;  // largest eigenvalue of Q--
  double q2_margin = 0.0;  // smallest eigenvalue of (Q++ - Q--) - Q^2
  double asymmetry = 0.0;
  bool ok(double tol = 1e-9) const;
};
DefectChecks check_defect(const DefectState& s, const ActiveSpace& as);

struct DefectWindow {
  DefectSpace space = DefectSpace::window;
  double below = 2.0;  // E_floor = eps_F - below
  double above = 2.0;  // E_ceil = eps_F + above
};

struct ChiBranch {
  ChiProfile chi;
  double occupied_count = 0.0;
  double nu_charge = 0.0, nu_self_energy = 0.0;
  int active_occ = 0, active_virt = 0;
  DefectState defect;
  DefectChecks checks;
  ScalarField total_density;  // rho_chi + rho_Q
};

struct ChiIndependence {
  double l2_diff = 0.0;   // interior L2 norm of the total-density difference
  double floor = 0.0;     // pure-material discretization floor (tiled cell density vs box density)
  double tol = 0.0;       // defect fixed-point tolerance
  double bound = 0.0;     // 5 (tol + floor)
  bool pass = false;
  ChiBranch a, b;
};

// Full pipeline for both cutoffs; errors are rethrown with the branch tag.
ChiIndependence chi_independence_check(const JunctionConfig& cfg, const ChiProfile& chi_a, const ChiProfile& chi_b,
                                       const DefectWindow& window, const DefectOptions& opt);

// Interior L2 distance between each material's tiled cell density and its box density (larger of the two).
double pure_discretization_floor(const JunctionConfig& cfg, const ReferenceState& ref);

}  // namespace qrhf
