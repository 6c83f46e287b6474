#pragma once

#include <string>
#include <vector>

#include "qrhf/coulomb.hpp"
#include "qrhf/fields.hpp"
#include "qrhf/groundstate.hpp"
#include "qrhf/operators.hpp"

namespace qrhf {

// Left material fills x <= 0 (nuclei at x = n a_L), right material x > 0.
struct JunctionConfig {
  PeriodicMaterial left, right;
  ChiProfile chi;
  SupercellGrid box;
  ScalarField v_extra;  // seam charge v on the box; empty (0 x 0) means v = 0
  int m_max = -1;       // supercell channels; -1: the smaller of the materials' m_max

  int channels() const;
  double a_max() const;
  // L >= 8 max(a), both Fermi levels negative, radial grids shared, v_extra compact in the box.
  void validate() const;
};

struct BandInterval {
  int m = 0;
  int n = 0;
  double lo = 0.0, hi = 0.0;
  double filled = 0.0;  // fraction of Brillouin samples where the level is occupied
};

// Band extents per (m, n) over the Brillouin samples, for the bands that start below `below`.
std::vector<BandInterval> band_intervals(const GroundState& state, double below = 0.0);

struct GapReport {
  double sigma_a = 0.0, sigma_b = 0.0;
  double eps_left = 0.0, eps_right = 0.0;
  double fermi = 0.0;  // max(eps_L, eps_R)
  bool ok = false;
};

// sigma_a: top of the highest (partly) occupied band of either material; sigma_b: bottom of the lowest
// (partly) empty band, capped at 0 where the transverse continuum starts.
GapReport gap_check(const GroundState& left, const GroundState& right);

// chi^2 V_L + (1 - chi^2) V_R on the box.
ScalarField reference_potential(const JunctionConfig& cfg);
ScalarField reference_potential(const JunctionConfig& cfg, const ChiProfile& chi);

// Pointwise chi on the box nodes (value, first and second derivative).
std::vector<ChiValue> chi_on_box(const JunctionConfig& cfg, const ChiProfile& chi);

struct ChannelStates {
  int m = 0;
  SupercellSpectrum spectrum;
};

// Occupied density of a box Hamiltonian: all channel eigenpairs below `fermi`.
struct BoxProjector {
  ScalarField density;
  std::vector<ChannelStates> occupied;
  double count = 0.0;  // channel-weighted number of occupied states
  std::vector<std::string> warnings;
};
BoxProjector box_projector(const ScalarField& V, const SupercellGrid& box, int m_max, double fermi,
                           double boundary_tol = 1e-9);

struct ReferenceState {
  SupercellGrid grid;
  ChiProfile chi;
  int m_max = 0;
  GapReport gap;
  double fermi_level = 0.0;
  ScalarField potential;  // V_chi
  ScalarField density;    // rho_chi
  std::vector<ChannelStates> occupied;
  double occupied_count = 0.0;
  // Pure-material references on the same box (V_L or V_R everywhere). They carry the same
  // finite-difference and wall errors as rho_chi, so the density defect isolates the seam.
  ScalarField left_box_density, right_box_density;
  std::vector<std::string> warnings;
};

// Refuses (ValidationError) when the gap check fails.
ReferenceState reference_density(const JunctionConfig& cfg);
ReferenceState reference_density(const JunctionConfig& cfg, const ChiProfile& chi);

// chi^2 rho_L + (1 - chi^2) rho_R from the box references, minus rho_chi.
ScalarField density_defect(const JunctionConfig& cfg, const ReferenceState& ref);

struct DefectDecay {
  std::vector<double> window_lo, window_hi, mass;  // unit windows in x
  double rate = 0.0;                               // smaller of the two one-sided rates
  double r2 = 0.0;                                 // smaller of the two one-sided R^2
  double rate_left = 0.0, rate_right = 0.0, r2_left = 0.0, r2_right = 0.0;
  double fit_inner = 0.0, fit_outer = 0.0;  // |x| range used
  int points = 0;
  bool window_shrunk = false;
  double interior_max = 0.0;  // largest window mass with |x| < L - 2 a_max
};
DefectDecay density_defect_decay(const JunctionConfig& cfg, const ReferenceState& ref);

ScalarField eta_chi(const JunctionConfig& cfg);
ScalarField eta_chi(const JunctionConfig& cfg, const ChiProfile& chi);

// Relative interior L2 residual of -Lap_h V_chi / 4 pi - [chi^2 q_L + (1 - chi^2) q_R + eta_chi],
// q = rho - mu of the periodic states, on nodes >= 2 a_max from the walls and one unit inside r_max.
double poisson_consistency(const JunctionConfig& cfg, const ChiProfile& chi);

struct NuChi {
  ScalarField nu;
  double charge = 0.0;
  double self_energy = 0.0;  // D(nu, nu)
  BoundaryReport boundary;
};
// Throws ValidationError ("box too small") when nu has not decayed at the box edges.
NuChi nu_chi(const JunctionConfig& cfg, const ReferenceState& ref, double boundary_tol = 1e-6);

struct SpectrumEntry {
  int m = 0;
  double lambda = 0.0;
  bool in_bands = false;
  double seam_fraction = 0.0;  // mass with |x| < 4 a_max
  double wall_fraction = 0.0;  // mass within 2 a_max of a wall
  bool wall_state = false;     // gap state that also appears in a pure-material box
};

struct SpectrumClassification {
  ChiProfile chi;
  std::vector<SpectrumEntry> entries;
  int band_states = 0, gap_states = 0, seam_gap_states = 0, wall_gap_states = 0, other_gap_states = 0;
};

struct SpectrumUnionReport {
  double delta_band = 0.0;
  double pure_discrepancy_left = 0.0, pure_discrepancy_right = 0.0;
  std::vector<SpectrumClassification> per_chi;
  bool stable = false;              // same per-channel band/gap counts for every chi
  bool gap_states_localized = false;  // every non-wall gap state has seam_fraction >= 0.9
};

// Classifies the H_chi spectrum below 0 against the union of both materials' bands, for each chi.
SpectrumUnionReport spectrum_union_check(const JunctionConfig& cfg, const std::vector<ChiProfile>& chis);

// The three cutoffs used by the checks: quintic and septic smoothsteps over the whole seam, and a
// quintic over a shifted sub-window.
std::vector<ChiProfile> standard_chi_profiles();

// Interior mask: nodes at least `margin` from both walls.
bool interior_node(const SupercellGrid& g, int i, double margin);
double interior_l2(const ScalarField& f, double margin);

}  // namespace qrhf
