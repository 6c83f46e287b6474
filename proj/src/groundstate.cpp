#include "qrhf/groundstate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qrhf/coulomb.hpp"
#include "qrhf/errors.hpp"
#include "qrhf/mixing.hpp"
#include "qrhf/parallel.hpp"

namespace qrhf {

namespace {
constexpr double pi = std::numbers::pi;

// sum_c occ_c |u_c|^2 on the cell grid for the columns of a fiber eigenvector block, times w.
void accumulate_density(const Eigen::MatrixXcd& V, const Eigen::VectorXd& occ, int n_pw, const CellGrid& grid,
                        double w, Eigen::MatrixXd& rho) {
  const int nr = grid.n_r, P = 2 * n_pw + 1;
  const double a = grid.period_a;
  Eigen::MatrixXcd phase(P, grid.n_x);
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < grid.n_x; ++i) phase(p, i) = std::polar(1.0, 2.0 * pi * (p - n_pw) * grid.x(i) / a);
  Eigen::VectorXd scale(nr);
  for (int j = 0; j < nr; ++j) scale(j) = 1.0 / std::sqrt(a * grid.radial().weight(j));
  for (int c = 0; c < occ.size(); ++c) {
    if (occ(c) == 0.0) continue;
    Eigen::Map<const Eigen::MatrixXcd> C(V.col(c).data(), nr, P);
    Eigen::MatrixXcd u = scale.asDiagonal() * (C * phase);  // (n_r, n_x)
    rho.noalias() += (w * occ(c)) * u.cwiseAbs2().transpose();
  }
}

Eigen::VectorXd occupations_of(const Eigen::VectorXd& values, const FermiLevel& f) {
  Eigen::VectorXd o(values.size());
  for (int n = 0; n < values.size(); ++n) o(n) = f.occupation(values(n));
  return o;
}

FermiLevel plain_fermi(double fermi) {
  FermiLevel f;
  f.fermi = fermi;
  return f;
}

int occupied_count(const Eigen::VectorXd& values, double fermi) {
  int n = 0;
  while (n < values.size() && values(n) <= fermi) ++n;
  return n;
}
}  // namespace

int BandStructure::multiplicity(int r) const {
  if (r == 0) return 1;
  if (grid.n_xi % 2 == 0 && r == grid.n_xi / 2) return 1;
  return 2;
}

BandStructure band_structure(const ScalarField& V, const CellGrid& grid, double e_cap, const BandOptions& opt,
                             const BandStructure* warm) {
  grid.validate();
  BandStructure b;
  b.grid = grid;
  b.n_pw = opt.n_pw < 0 ? grid.n_x / 4 : opt.n_pw;
  b.e_cap = e_cap;
  for (int k = 0; k < grid.n_xi; ++k) b.xis.push_back(grid.xi(k));
  for (int m = 0; m <= grid.m_max; ++m) b.channels.push_back(m);
  const int M = grid.m_max + 1, R = b.n_reps();
  b.fibers.resize(R * M);
  bool use_warm = warm && warm->grid == grid && warm->n_pw == b.n_pw;
  parallel_for(R * M, [&](int idx) {
    int r = idx / M, m = idx % M;
    BlochFiber H = assemble_bloch_fiber(V, grid.xi(r), m, grid, b.n_pw);
    LobpcgOptions lo = opt.solver;
    lo.seed = opt.solver.seed + 1000u * r + m;
    const Eigen::MatrixXcd* seed = use_warm ? &warm->fibers[idx].block : nullptr;
    if (seed && seed->cols() == 0) seed = nullptr;
    EigenResult er = fiber_eigenpairs(H, e_cap, seed, lo);
    FiberBands& f = b.fibers[idx];
    f.k = r;
    f.m = m;
    f.values = er.values;
    f.vectors = er.vectors;
    f.block = er.block;
  });
  return b;
}

double counting_function(const BandStructure& b, double kappa) {
  double total = 0.0;
  for (int r = 0; r < b.n_reps(); ++r)
    for (int m = 0; m <= b.grid.m_max; ++m)
      total += b.multiplicity(r) * BandStructure::channel_weight(m) * occupied_count(b.fiber(r, m).values, kappa);
  return total / b.grid.n_xi;
}

double FermiLevel::occupation(double lambda) const {
  if (!split) return lambda <= fermi ? 1.0 : 0.0;
  if (lambda < group_energy - group_tol) return 1.0;
  if (lambda <= group_energy + group_tol) return group_fraction;
  return 0.0;
}

FermiLevel fermi_level(const BandStructure& b, int target_z, double degeneracy_tol, FermiPolicy policy) {
  if (target_z <= 0) throw ValidationError("fermi_level: target charge must be positive");
  std::vector<double> pooled;
  for (int r = 0; r < b.n_reps(); ++r)
    for (int m = 0; m <= b.grid.m_max; ++m) {
      int copies = b.multiplicity(r) * static_cast<int>(BandStructure::channel_weight(m));
      for (int n = 0; n < b.fiber(r, m).values.size(); ++n)
        for (int c = 0; c < copies; ++c) pooled.push_back(b.fiber(r, m).values(n));
    }
  std::sort(pooled.begin(), pooled.end());
  const size_t need = static_cast<size_t>(target_z) * b.grid.n_xi;
  FermiLevel f;
  if (policy == FermiPolicy::aufbau) {
    if (pooled.size() <= need) {
      std::ostringstream os;
      os << "fewer than Z * N_xi + 1 levels below the cap " << b.e_cap << "; raise e_cap";
      throw ConvergenceError(os.str());
    }
    const double e = pooled[need - 1], tol = degeneracy_tol * std::max(1.0, std::abs(e));
    size_t lo = need - 1, hi = need;
    while (lo > 0 && pooled[lo - 1] >= e - tol) --lo;
    while (hi < pooled.size() && pooled[hi] <= e + tol) ++hi;
    if (hi == need) {
      f.homo = e;
      f.lumo = pooled[need];
      f.fermi = 0.5 * (f.homo + f.lumo);
    } else {
      f.homo = f.lumo = f.fermi = f.group_energy = e;
      f.split = true;
      f.group_tol = tol;
      f.group_fraction = static_cast<double>(need - lo) / static_cast<double>(hi - lo);
    }
    return f;
  }
  if (pooled.size() < need || pooled[need - 1] >= 0.0) {
    std::ostringstream os;
    os << "insufficient negative levels: F(0) = " << counting_function(b, -1e-300) << " < Z = " << target_z
       << " (radial box or resolution too small?)";
    throw ConvergenceError(os.str());
  }
  f.homo = pooled[need - 1];
  f.lumo = need < pooled.size() ? pooled[need] : std::max(b.e_cap, 0.0);
  if (f.lumo - f.homo <= degeneracy_tol * std::max(1.0, std::abs(f.homo))) {
    std::ostringstream os;
    os << "degenerate levels at the Fermi boundary (" << f.homo << ", " << f.lumo
       << "); fractional occupation is not supported, refine the Brillouin sampling";
    throw DegeneracyError(os.str());
  }
  f.fermi = 0.5 * (f.homo + std::min(f.lumo, 0.0));
  return f;
}

double fermi_bisect(const BandStructure& b, int target_z) { return fermi_level(b, target_z).fermi; }

ScalarField density_from_projector(const BandStructure& b, const FermiLevel& fermi, const CellGrid& grid) {
  if (!(b.grid == grid)) throw ValidationError("density_from_projector: band structure belongs to another grid");
  const int M = grid.m_max + 1;
  std::vector<Eigen::MatrixXd> parts(b.fibers.size(), Eigen::MatrixXd::Zero(grid.n_x, grid.n_r));
  parallel_for(static_cast<int>(b.fibers.size()), [&](int idx) {
    const FiberBands& f = b.fibers[idx];
    double w = b.multiplicity(idx / M) * BandStructure::channel_weight(f.m) / grid.n_xi;
    accumulate_density(f.vectors, occupations_of(f.values, fermi), b.n_pw, grid, w, parts[idx]);
  });
  ScalarField rho = ScalarField::on(grid);
  for (const auto& p : parts) rho.values += p;  // fixed order: reproducible sums
  return rho;
}

ScalarField density_from_projector(const BandStructure& b, double fermi, const CellGrid& grid) {
  return density_from_projector(b, plain_fermi(fermi), grid);
}

double kinetic_energy(const BandStructure& b, const ScalarField& V, const FermiLevel& fermi) {
  const CellGrid& grid = b.grid;
  const int M = grid.m_max + 1;
  std::vector<double> parts(b.fibers.size(), 0.0);
  parallel_for(static_cast<int>(b.fibers.size()), [&](int idx) {
    const FiberBands& f = b.fibers[idx];
    Eigen::VectorXd occ = occupations_of(f.values, fermi);
    if (occ.sum() == 0.0) return;
    BlochFiber H = assemble_bloch_fiber(V, grid.xi(f.k), f.m, grid, b.n_pw);
    double w = b.multiplicity(idx / M) * BandStructure::channel_weight(f.m) / grid.n_xi;
    for (int c = 0; c < occ.size(); ++c)
      if (occ(c) != 0.0) parts[idx] += w * occ(c) * H.kinetic(f.vectors.col(c));
  });
  double t = 0.0;
  for (double p : parts) t += p;
  return t;
}

double kinetic_energy(const BandStructure& b, const ScalarField& V, double fermi) {
  return kinetic_energy(b, V, plain_fermi(fermi));
}

ScalarField initial_density(const ScalarField& mu, const CellGrid& grid, int charge_z, InitialGuess kind) {
  ScalarField rho = ScalarField::on(grid);
  const double a = grid.period_a;
  if (kind == InitialGuess::uniform) {
    for (int i = 0; i < grid.n_x; ++i)
      for (int j = 0; j < grid.n_r; ++j) {
        double r = grid.radial().node(j);
        rho(i, j) = std::exp(-r / 1.5);
      }
  } else {
    // broadened copy of the nuclear profile: Gaussian at the nuclear centroid (x) and peak radius
    double cs = 0.0, sn = 0.0;
    Eigen::VectorXd prof = Eigen::VectorXd::Zero(grid.n_r);
    for (int i = 0; i < grid.n_x; ++i)
      for (int j = 0; j < grid.n_r; ++j) {
        double w = mu(i, j) * grid.radial().weight(j);
        cs += w * std::cos(2 * pi * grid.x(i) / a);
        sn += w * std::sin(2 * pi * grid.x(i) / a);
        prof(j) += mu(i, j);
      }
    double xc = std::atan2(sn, cs) * a / (2 * pi);
    int jc;
    prof.maxCoeff(&jc);
    double rc = jc == 0 ? 0.0 : grid.radial().node(jc);
    const double s = 3.0;
    for (int i = 0; i < grid.n_x; ++i)
      for (int j = 0; j < grid.n_r; ++j) {
        double r = grid.radial().node(j), v = 0.0;
        for (int t = -3; t <= 3; ++t) {
          double dx = grid.x(i) - xc - t * a;
          v += std::exp(-(dx * dx + (r - rc) * (r - rc)) / (s * s));
        }
        rho(i, j) = v;
      }
  }
  rho *= charge_z / rho.integral();
  return rho;
}

namespace {
GroundState projector_state_core(const ScalarField& V, const CellGrid& grid, const ScfOptions& opt,
                                 const BandStructure* warm) {
  GroundState st;
  st.grid = grid;
  st.charge_z = opt.charge_z;
  st.potential = V;
  st.bands = band_structure(V, grid, opt.e_cap, opt.bands, warm);
  FermiLevel fl = fermi_level(st.bands, opt.charge_z, 1e-8, opt.fermi_policy);
  st.fermi = fl;
  st.fermi_level = fl.fermi;
  st.homo = fl.homo;
  st.lumo = fl.lumo;
  st.negative_count = counting_function(st.bands, -1e-300);
  st.density = density_from_projector(st.bands, fl, grid);
  st.occupations.assign(grid.n_xi, std::vector<int>(grid.m_max + 1, 0));
  for (int k = 0; k < grid.n_xi; ++k)
    for (int m = 0; m <= grid.m_max; ++m) {
      const Eigen::VectorXd& v = st.bands.values(k, m);
      for (int n = 0; n < v.size(); ++n) st.occupations[k][m] += fl.occupation(v(n)) > 0.0;
    }
  st.energy_kinetic = kinetic_energy(st.bands, V, fl);
  return st;
}
}  // namespace

GroundState projector_state(const ScalarField& V, const ScalarField& mu, const CellGrid& grid, const ScfOptions& opt,
                            const BandStructure* warm) {
  GroundState st = projector_state_core(V, grid, opt, warm);
  ScalarField q = st.density - mu;
  st.energy_coulomb = 0.5 * coulomb_energy_cell(q, q, 1e-7);
  return st;
}

ScalarField designed_charge(const NuclearDensity& nuclei, const CellGrid& grid, double contrast, double width) {
  if (!(width > 0.0)) throw ValidationError("designed_charge: width must be > 0");
  ScalarField N = build_nuclear_density(nuclei, grid);
  ScalarField G = ScalarField::on(grid);
  for (int i = 0; i < grid.n_x; ++i)
    for (int j = 0; j < grid.n_r; ++j) {
      double r = grid.radial().node(j);
      G(i, j) = std::exp(-r * r / (width * width));
    }
  G *= nuclei.charge_z / G.integral();
  return contrast * (G - N);
}

PeriodicMaterial designed_material(const ScalarField& q, const CellGrid& grid, const ScfOptions& opt) {
  grid.validate();
  if (!neutrality_check(q, 1e-7).is_neutral) throw ValidationError("designed_material: charge must be neutral");
  ScalarField V = solve_periodic_potential(q, 1e-7);
  PeriodicMaterial out;
  out.state = projector_state_core(V, grid, opt, nullptr);
  out.state.energy_coulomb = 0.5 * coulomb_energy_cell(q, q, 1e-7);
  out.mu = out.state.density - q;
  return out;
}

PeriodicMaterial scf_material(const NuclearDensity& nuclei, const CellGrid& grid, const ScfOptions& opt) {
  PeriodicMaterial out;
  out.mu = build_nuclear_density(nuclei, grid);
  ScfOptions o = opt;
  o.charge_z = nuclei.charge_z;
  out.state = scf_solve(out.mu, grid, o);
  return out;
}


GroundState scf_solve(const ScalarField& mu, const CellGrid& grid, const ScfOptions& opt, const ScalarField* rho0) {
  grid.validate();
  if (!(opt.mix_beta > 0.0 && opt.mix_beta <= 1.0)) throw ValidationError("scf: mix_beta must lie in (0, 1]");
  if (!(opt.tol > 0.0)) throw ValidationError("scf: tol must be > 0");
  if (opt.max_iter < 1) throw ValidationError("scf: max_iter must be >= 1");
  if (opt.anderson_depth < 0) throw ValidationError("scf: anderson_depth must be >= 0");

  ScalarField x = rho0 ? *rho0 : initial_density(mu, grid, opt.charge_z, InitialGuess::mu_shaped);
  x.require_same_grid(mu, "scf_solve");
  AndersonMixer mixer(opt.anderson_depth, opt.mix_beta);
  std::vector<ScfLogEntry> history;
  BandStructure warm;
  bool have_warm = false;
  for (int it = 1; it <= opt.max_iter; ++it) {
    ScalarField V = solve_periodic_potential(x - mu, 1e-7);
    GroundState st = projector_state(V, mu, grid, opt, have_warm ? &warm : nullptr);
    ScalarField f = st.density - x;
    double res = f.l2_norm();
    ScfLogEntry e{it, res, st.fermi_level, st.energy_kinetic + st.energy_coulomb};
    history.push_back(e);
    if (opt.on_iteration) opt.on_iteration(e);
    if (res < opt.tol) {
      st.scf_residual = res;
      st.iterations = it;
      st.history = history;
      return st;
    }
    warm = std::move(st.bands);
    have_warm = true;

    Eigen::VectorXd next = mixer.next(weighted_vector(x), weighted_vector(f));
    assign_weighted(next, x);
  }
  std::ostringstream os;
  os << "SCF did not converge in " << opt.max_iter << " iterations; residual history:";
  for (const auto& h : history) os << ' ' << h.residual;
  throw ConvergenceError(os.str());
}

EnergyComponents total_energy(const GroundState& state, const ScalarField& mu) {
  EnergyComponents e;
  e.kinetic = kinetic_energy(state.bands, state.potential, state.fermi);
  ScalarField q = state.density - mu;
  e.coulomb = 0.5 * coulomb_energy_cell(q, q, 1e-7);
  e.total = e.kinetic + e.coulomb;
  return e;
}

HoffmannOstenhof hoffmann_ostenhof_check(const ScalarField& rho, double kinetic) {
  // Forward differences matching the discrete kinetic operators: periodic in x, the radial
  // finite-volume form with its Dirichlet ghost node at r_max.
  const int nx = rho.n_x(), nr = rho.n_r();
  const RadialGrid& g = rho.radial;
  const double h = g.h(), dx = rho.dx;
  Eigen::MatrixXd s = rho.values.cwiseMax(0.0).cwiseSqrt();
  double gx = 0.0, gr = 0.0;
  for (int i = 0; i < nx; ++i) {
    int ip = (i + 1) % nx;
    for (int j = 0; j < nr; ++j) {
      double d = (s(ip, j) - s(i, j)) / dx;
      gx += g.weight(j) * d * d;
    }
    for (int j = 0; j + 1 < nr; ++j) {
      double d = s(i, j + 1) - s(i, j);
      gr += 2.0 * pi * g.face(j) * d * d / h;
    }
    gr += 2.0 * pi * 2.0 * g.face(nr - 1) * s(i, nr - 1) * s(i, nr - 1) / h;
  }
  HoffmannOstenhof r;
  r.gradient_sqrt_rho = dx * (gx + gr);
  r.kinetic_trace = 2.0 * kinetic;
  r.holds = r.gradient_sqrt_rho <= r.kinetic_trace * (1.0 + 1e-12);
  return r;
}

DecayFit decay_fit(const ScalarField& f, double fit_start_r, double end_frac) {
  const RadialGrid& g = f.radial;
  DecayFit fit;
  std::vector<double> rs, ls;
  double r_end = end_frac * g.r_max;
  for (int j = 0; j < f.n_r(); ++j) {
    double r = g.node(j);
    if (r <= fit_start_r || r >= r_end) continue;
    double p = f.values.col(j).cwiseAbs().maxCoeff();
    if (!(p > 1e-300)) {
      fit.window_shrunk = true;
      break;
    }
    rs.push_back(r);
    ls.push_back(std::log(p));
  }
  fit.points = static_cast<int>(rs.size());
  if (fit.points < 3) return fit;
  fit.r_start = rs.front();
  fit.r_end = rs.back();
  double mr = 0, ml = 0;
  for (int k = 0; k < fit.points; ++k) mr += rs[k], ml += ls[k];
  mr /= fit.points;
  ml /= fit.points;
  double sxy = 0, sxx = 0, syy = 0;
  for (int k = 0; k < fit.points; ++k) {
    sxy += (rs[k] - mr) * (ls[k] - ml);
    sxx += (rs[k] - mr) * (rs[k] - mr);
    syy += (ls[k] - ml) * (ls[k] - ml);
  }
  double slope = sxy / sxx;
  fit.rate = -slope;
  fit.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

double radial_moment(const ScalarField& rho) {
  double s = 0.0;
  for (int j = 0; j < rho.n_r(); ++j) s += rho.radial.node(j) * rho.radial.weight(j) * rho.values.col(j).sum();
  return s * rho.dx;
}

}  // namespace qrhf
