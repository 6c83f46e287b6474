#include "qrhf/defect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "qrhf/errors.hpp"
#include "qrhf/mixing.hpp"
#include "qrhf/parallel.hpp"

namespace qrhf {

namespace {
double channel_weight(int m) { return m == 0 ? 1.0 : 2.0; }

Eigen::VectorXd flat(const ScalarField& f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.n_x()) * f.n_r());
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) v(i * f.n_r() + j) = f(i, j);
  return v;
}

// B^T diag(W) B
Eigen::MatrixXd project_potential(const Eigen::MatrixXd& B, const Eigen::VectorXd& W) {
  Eigen::MatrixXd WB = W.asDiagonal() * B;
  return B.transpose() * WB;
}

Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& A) {
  if (A.rows() == 0) return Eigen::VectorXd();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues();
}

double trace_gamma_of(const ActiveSpace& as, const std::vector<Eigen::MatrixXd>& q) {
  double t = 0.0;
  for (size_t c = 0; c < as.channels.size(); ++c) t += channel_weight(as.channels[c].m) * q[c].trace();
  return t;
}

void require_kappa(const ActiveSpace& as, double kappa) {
  if (!(kappa > as.occupied_top && kappa < as.fermi_level)) {
    std::ostringstream os;
    os << "kappa " << kappa << " outside the gap (" << as.occupied_top << ", " << as.fermi_level << ")";
    throw DomainError(os.str());
  }
}

DefectEnergy assemble_energy(const std::vector<Eigen::MatrixXd>& q, const ActiveSpace& as, double kappa, double cross,
                             double self) {
  DefectEnergy e;
  double kin = 0.0;
  for (size_t c = 0; c < as.channels.size(); ++c) {
    const ActiveChannel& ch = as.channels[c];
    const int n = ch.size();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd& g = ch.gamma;
    // |H - kappa| = (H - kappa)(1 - 2 gamma) on span B, since gamma commutes with H and kappa lies in the gap
    Eigen::MatrixXd absH = (ch.h - kappa * I) * (I - 2.0 * g);
    Eigen::MatrixXd qpp = (I - g) * q[c] * (I - g), qmm = g * q[c] * g;
    kin += channel_weight(ch.m) * (absH * (qpp - qmm)).trace();
  }
  e.trace_gamma = trace_gamma_of(as, q);
  e.kinetic = kin + kappa * e.trace_gamma;
  e.cross = cross;
  e.self = self;
  e.energy = e.kinetic + e.cross + e.self;
  e.objective = e.energy - kappa * e.trace_gamma;
  return e;
}

double violation(const Eigen::VectorXd& ev) {
  double v = 0.0;
  for (int i = 0; i < ev.size(); ++i) v = std::max({v, -ev(i), ev(i) - 1.0});
  return v;
}

// Random antisymmetric generator coupling ran(gamma) with its complement, applied by a Cayley transform.
Eigen::MatrixXd random_rotation(const Eigen::MatrixXd& gamma, double angle, std::mt19937_64& rng) {
  const int n = static_cast<int>(gamma.rows());
  std::normal_distribution<double> nd;
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = angle * nd(rng) / std::sqrt(static_cast<double>(n));
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd A = gamma * R * (I - gamma);
  A -= A.transpose().eval();
  return (I - 0.5 * A).partialPivLu().solve(I + 0.5 * A);
}

ScalarField to_field(const Eigen::VectorXd& acc, const SupercellGrid& g) {
  ScalarField rho = ScalarField::on(g);
  for (int i = 0; i < g.n_x; ++i)
    for (int j = 0; j < g.n_r; ++j) rho(i, j) = acc(i * g.n_r + j) / (g.dx() * g.radial().weight(j));
  return rho;
}

// Orthonormal basis of span[Phi, Psi] with Phi first (Phi is orthonormal already).
Eigen::MatrixXd joint_basis(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& Psi) {
  Eigen::MatrixXd R = Psi - Phi * (Phi.transpose() * Psi);
  R -= Phi * (Phi.transpose() * R);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(R);
  qr.setThreshold(1e-9);
  const int rank = static_cast<int>(qr.rank());
  Eigen::MatrixXd extra = qr.householderQ() * Eigen::MatrixXd::Identity(R.rows(), rank);
  extra -= Phi * (Phi.transpose() * extra);
  Eigen::HouseholderQR<Eigen::MatrixXd> q2(extra);
  extra = q2.householderQ() * Eigen::MatrixXd::Identity(R.rows(), rank);
  Eigen::MatrixXd B(Phi.rows(), Phi.cols() + rank);
  B << Phi, extra;
  return B;
}
}  // namespace

int ActiveSpace::n_occ() const {
  int n = 0;
  for (const auto& c : channels) n += c.n_occ;
  return n;
}

int ActiveSpace::n_virt() const {
  int n = 0;
  for (const auto& c : channels) n += c.size() - c.n_occ;
  return n;
}

double ActiveSpace::occupied_weight() const {
  double n = 0.0;
  for (const auto& c : channels) n += channel_weight(c.m) * c.n_occ;
  return n;
}

double ActiveSpace::orthonormality_error() const {
  double e = 0.0;
  for (const auto& c : channels) {
    Eigen::MatrixXd G = c.vectors.transpose() * c.vectors;
    G -= Eigen::MatrixXd::Identity(G.rows(), G.cols());
    if (G.size()) e = std::max(e, G.cwiseAbs().maxCoeff());
  }
  return e;
}

namespace {
double occupied_top_of(const ReferenceState& ref) {
  double top = -std::numeric_limits<double>::infinity();
  for (const ChannelStates& cs : ref.occupied)
    if (cs.spectrum.values.size()) top = std::max(top, cs.spectrum.values.maxCoeff());
  return top;
}
}  // namespace

ActiveSpace build_active_space(const ReferenceState& ref, double e_floor, double e_ceil) {
  if (!(e_floor < ref.fermi_level && ref.fermi_level < e_ceil))
    throw ValidationError("active space: window must contain the Fermi level");
  ActiveSpace as;
  as.grid = ref.grid;
  as.fermi_level = ref.fermi_level;
  as.occupied_top = occupied_top_of(ref);
  as.e_floor = e_floor;
  as.e_ceil = e_ceil;
  std::vector<ActiveChannel> all(ref.m_max + 1);
  parallel_for(ref.m_max + 1, [&](int m) {
    SupercellOperator H = assemble_supercell(ref.potential, m, ref.grid);
    ActiveChannel& ch = all[m];
    ch.m = m;
    if (e_ceil <= H.v_min) return;
    SupercellSpectrum s = supercell_eigenpairs(H, std::max(e_floor, H.v_min - 1.0), e_ceil);
    ch.values = std::move(s.values);
    ch.vectors = std::move(s.vectors);
    while (ch.n_occ < ch.values.size() && ch.values(ch.n_occ) < ref.fermi_level) ++ch.n_occ;
    ch.h = ch.values.asDiagonal();
    ch.gamma = Eigen::MatrixXd::Zero(ch.size(), ch.size());
    ch.gamma.topLeftCorner(ch.n_occ, ch.n_occ).setIdentity();
  });
  for (ActiveChannel& c : all)
    if (c.size() > 0) as.channels.push_back(std::move(c));
  if (as.n_occ() == 0 || as.n_virt() == 0) {
    std::ostringstream os;
    os << "active space window [" << e_floor << ", " << e_ceil << "] has " << as.n_occ() << " occupied and "
       << as.n_virt() << " virtual states";
    throw ValidationError(os.str());
  }
  return as;
}

ScalarField density_of(const ActiveSpace& as, const std::vector<Eigen::MatrixXd>& q) {
  const SupercellGrid& g = as.grid;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.n_x) * g.n_r);
  for (size_t c = 0; c < as.channels.size(); ++c) {
    const ActiveChannel& ch = as.channels[c];
    if (q[c].size() == 0 || q[c].cwiseAbs().maxCoeff() == 0.0) continue;
    Eigen::MatrixXd T = ch.vectors * q[c];
    acc += channel_weight(ch.m) * T.cwiseProduct(ch.vectors).rowwise().sum();
  }
  return to_field(acc, g);
}

DefectEnergy defect_energy(const std::vector<Eigen::MatrixXd>& q, const ScalarField& rho_q, const ActiveSpace& as,
                           const ScalarField& nu, double kappa) {
  require_kappa(as, kappa);
  if (q.size() != as.channels.size()) throw ValidationError("defect_energy: one matrix per active channel expected");
  double cross = 0.0, self = 0.0;
  if (rho_q.values.cwiseAbs().maxCoeff() > 0.0) {
    cross = -coulomb_energy_free(rho_q, nu);
    self = 0.5 * coulomb_energy_free(rho_q, rho_q);
  }
  return assemble_energy(q, as, kappa, cross, self);
}

void DefectOptions::validate() const {
  if (!(mix > 0.0 && mix <= 1.0)) throw ValidationError("defect: mix must lie in (0, 1]");
  if (!(tol > 0.0)) throw ValidationError("defect: tol must be > 0");
  if (max_iter < 1) throw ValidationError("defect: max_iter must be >= 1");
  if (anderson_depth < 0) throw ValidationError("defect: anderson_depth must be >= 0");
  if (!(degeneracy_tol > 0.0)) throw ValidationError("defect: degeneracy_tol must be > 0");
}

namespace {
[[noreturn]] void throw_degenerate(double l, int m, int it) {
  std::ostringstream os;
  os << "defect: level " << l << " in channel " << m << " at the Fermi level (iteration " << it << ")";
  throw DegeneracyError(os.str());
}

[[noreturn]] void throw_unconverged(const char* what, const std::vector<DefectLogEntry>& history) {
  std::ostringstream os;
  os << what << " did not converge in " << history.size() << " iterations; residual history:";
  for (const auto& h : history) os << ' ' << h.residual;
  throw ConvergenceError(os.str());
}

DefectState finish(std::vector<Eigen::MatrixXd> q, std::vector<Eigen::VectorXd> levels, ScalarField rho,
                   const DefectEnergy& en, double kappa, double res, std::vector<DefectLogEntry> history) {
  DefectState s;
  s.q = std::move(q);
  s.levels = std::move(levels);
  s.density = std::move(rho);
  s.trace_gamma = en.trace_gamma;
  s.kappa = kappa;
  s.energy = en;
  s.residual = res;
  s.iterations = static_cast<int>(history.size());
  s.history = std::move(history);
  return s;
}
}  // namespace

DefectState minimize_defect(const ActiveSpace& as, const ScalarField& nu, const DefectOptions& opt) {
  opt.validate();
  nu.require_same_grid(ScalarField::on(as.grid), "minimize_defect");
  const int C = static_cast<int>(as.channels.size());
  const double kappa = 0.5 * (as.occupied_top + as.fermi_level);
  const FreeCoulombSolver& solver = free_coulomb_solver(as.grid);
  const ScalarField U_nu = solver.potential(nu);

  std::vector<Eigen::MatrixXd> q(C);
  ScalarField x = ScalarField::on(as.grid);
  if (opt.seed != 0) {
    std::mt19937_64 rng(opt.seed);
    for (int c = 0; c < C; ++c) {
      const Eigen::MatrixXd& g = as.channels[c].gamma;
      Eigen::MatrixXd U = random_rotation(g, opt.start_angle, rng);
      q[c] = U * g * U.transpose() - g;
    }
    x = density_of(as, q);
  }

  AndersonMixer mixer(opt.anderson_depth, opt.mix);
  std::vector<DefectLogEntry> history;
  for (int it = 1; it <= opt.max_iter; ++it) {
    ScalarField W = solver.potential(x);
    W -= U_nu;
    Eigen::VectorXd w = flat(W);
    std::vector<Eigen::VectorXd> levels(C);
    double viol = 0.0;
    for (int c = 0; c < C; ++c) {
      const ActiveChannel& ch = as.channels[c];
      Eigen::MatrixXd H = ch.h + project_potential(ch.vectors, w);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      levels[c] = es.eigenvalues();
      int occ = 0;
      for (int i = 0; i < levels[c].size(); ++i) {
        double l = levels[c](i);
        if (std::abs(l - as.fermi_level) <= opt.degeneracy_tol) throw_degenerate(l, ch.m, it);
        occ += l < as.fermi_level;
      }
      Eigen::MatrixXd Cocc = es.eigenvectors().leftCols(occ);
      Eigen::MatrixXd P = Cocc * Cocc.transpose();
      q[c] = P - ch.gamma;
      viol = std::max(viol, violation(sym_eigenvalues(P)));
    }
    ScalarField rho = density_of(as, q);
    ScalarField f = rho - x;
    double res = f.l2_norm();
    DefectEnergy en = assemble_energy(q, as, kappa, -rho.inner(U_nu), 0.5 * rho.inner(solver.potential(rho)));
    DefectLogEntry e{it, res, en.objective, viol};
    history.push_back(e);
    if (opt.on_iteration) opt.on_iteration(e);
    if (res < opt.tol) return finish(std::move(q), std::move(levels), std::move(rho), en, kappa, res, std::move(history));
    assign_weighted(mixer.next(weighted_vector(x), weighted_vector(f)), x);
  }
  throw_unconverged("defect fixed point", history);
}

DefectState minimize_defect_full(const ReferenceState& ref, const ScalarField& nu, const DefectOptions& opt,
                                 ActiveSpace& space) {
  opt.validate();
  const SupercellGrid& g = ref.grid;
  nu.require_same_grid(ScalarField::on(g), "minimize_defect_full");
  const int M = ref.m_max;
  const double eF = ref.fermi_level;
  const FreeCoulombSolver& solver = free_coulomb_solver(g);
  const ScalarField U_nu = solver.potential(nu);
  const Eigen::Index dim = static_cast<Eigen::Index>(g.n_x) * g.n_r;

  std::vector<SupercellOperator> H0(M + 1);
  std::vector<const Eigen::MatrixXd*> Phi(M + 1);
  for (int m = 0; m <= M; ++m) {
    H0[m] = assemble_supercell(ref.potential, m, g);
    Phi[m] = &ref.occupied[m].spectrum.vectors;
  }

  space = ActiveSpace{};
  space.grid = g;
  space.fermi_level = eF;
  space.occupied_top = occupied_top_of(ref);
  space.e_floor = -std::numeric_limits<double>::infinity();
  space.e_ceil = std::numeric_limits<double>::infinity();

  // Q in the joint basis of old and new occupied states, channel by channel
  auto represent = [&](const std::vector<Eigen::MatrixXd>& Psi, std::vector<Eigen::MatrixXd>& q) {
    space.channels.clear();
    q.clear();
    for (int m = 0; m <= M; ++m) {
      if (Phi[m]->cols() == 0 && Psi[m].cols() == 0) continue;
      ActiveChannel ch;
      ch.m = m;
      ch.vectors = joint_basis(*Phi[m], Psi[m]);
      const int n = ch.size(), o = static_cast<int>(Phi[m]->cols());
      ch.n_occ = o;
      ch.gamma = Eigen::MatrixXd::Zero(n, n);
      ch.gamma.topLeftCorner(o, o).setIdentity();
      Eigen::MatrixXd HB = H0[m].matrix * ch.vectors;
      ch.h = ch.vectors.transpose() * HB;
      ch.h = 0.5 * (ch.h + ch.h.transpose()).eval();
      Eigen::MatrixXd c = ch.vectors.transpose() * Psi[m];
      q.push_back(c * c.transpose() - ch.gamma);
      space.channels.push_back(std::move(ch));
    }
  };

  std::vector<Eigen::MatrixXd> q;
  ScalarField x = ScalarField::on(g);
  if (opt.seed != 0) {
    // random admissible start: rotate the occupied states into the lowest virtual ones
    std::mt19937_64 rng(opt.seed);
    std::vector<Eigen::MatrixXd> Psi(M + 1);
    for (int m = 0; m <= M; ++m) {
      SupercellSpectrum virt = supercell_eigenpairs(H0[m], eF, eF + 1.0);
      Eigen::MatrixXd B(dim, Phi[m]->cols() + virt.vectors.cols());
      B << *Phi[m], virt.vectors;
      Eigen::MatrixXd gam = Eigen::MatrixXd::Zero(B.cols(), B.cols());
      gam.topLeftCorner(Phi[m]->cols(), Phi[m]->cols()).setIdentity();
      Eigen::MatrixXd U = random_rotation(gam, opt.start_angle, rng);
      Psi[m] = B * U.leftCols(Phi[m]->cols());
    }
    represent(Psi, q);
    x = density_of(space, q);
  }

  AndersonMixer mixer(opt.anderson_depth, opt.mix);
  std::vector<DefectLogEntry> history;
  for (int it = 1; it <= opt.max_iter; ++it) {
    ScalarField W = solver.potential(x);
    W -= U_nu;
    ScalarField V = ref.potential + W;
    std::vector<Eigen::MatrixXd> Psi(M + 1);
    std::vector<Eigen::VectorXd> levels(M + 1);
    parallel_for(M + 1, [&](int m) {
      SupercellOperator H = assemble_supercell(V, m, g);
      if (eF + opt.degeneracy_tol <= H.v_min) {
        Psi[m].resize(dim, 0);
        return;
      }
      SupercellSpectrum s = supercell_eigenpairs(H, H.v_min - 1.0, eF + opt.degeneracy_tol);
      for (int i = 0; i < s.values.size(); ++i)
        if (std::abs(s.values(i) - eF) <= opt.degeneracy_tol) throw_degenerate(s.values(i), m, it);
      levels[m] = s.values;
      Psi[m] = std::move(s.vectors);
    });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
    for (int m = 0; m <= M; ++m)
      for (int c = 0; c < Psi[m].cols(); ++c) acc += channel_weight(m) * Psi[m].col(c).cwiseAbs2();
    ScalarField rho = to_field(acc, g);
    rho -= ref.density;
    ScalarField f = rho - x;
    double res = f.l2_norm();
    represent(Psi, q);
    double viol = 0.0;
    for (size_t c = 0; c < q.size(); ++c)
      viol = std::max(viol, violation(sym_eigenvalues(space.channels[c].gamma + q[c])));
    const double kappa = 0.5 * (space.occupied_top + eF);
    DefectEnergy en = assemble_energy(q, space, kappa, -rho.inner(U_nu), 0.5 * rho.inner(solver.potential(rho)));
    DefectLogEntry e{it, res, en.objective, viol};
    history.push_back(e);
    if (opt.on_iteration) opt.on_iteration(e);
    if (res < opt.tol) return finish(std::move(q), std::move(levels), std::move(rho), en, kappa, res, std::move(history));
    assign_weighted(mixer.next(weighted_vector(x), weighted_vector(f)), x);
  }
  throw_unconverged("defect fixed point (full box)", history);
}

DefectState minimize_defect_projected(const ActiveSpace& as, const ScalarField& nu, double kappa,
                                      const ProjectedGradientOptions& opt) {
  require_kappa(as, kappa);
  const int C = static_cast<int>(as.channels.size());
  const FreeCoulombSolver& solver = free_coulomb_solver(as.grid);
  const ScalarField U_nu = solver.potential(nu);
  std::vector<Eigen::MatrixXd> D(C), q(C);
  for (int c = 0; c < C; ++c) D[c] = as.channels[c].gamma;

  struct Eval {
    double f = 0.0;
    ScalarField rho, W;
    DefectEnergy en;
  };
  auto evaluate = [&](const std::vector<Eigen::MatrixXd>& Dm) {
    std::vector<Eigen::MatrixXd> qm(C);
    for (int c = 0; c < C; ++c) qm[c] = Dm[c] - as.channels[c].gamma;
    Eval e;
    e.rho = density_of(as, qm);
    ScalarField Urho = solver.potential(e.rho);
    e.en = assemble_energy(qm, as, kappa, -e.rho.inner(U_nu), 0.5 * e.rho.inner(Urho));
    e.f = e.en.objective;
    e.W = Urho - U_nu;
    return e;
  };
  auto project = [](const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    Eigen::VectorXd l = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
    return Eigen::MatrixXd(es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose());
  };

  Eval cur = evaluate(D);
  double t = 1.0, step_norm = std::numeric_limits<double>::infinity();
  std::vector<DefectLogEntry> history;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::VectorXd w = flat(cur.W);
    std::vector<Eigen::MatrixXd> G(C);
    for (int c = 0; c < C; ++c) {
      const ActiveChannel& ch = as.channels[c];
      G[c] = ch.h + project_potential(ch.vectors, w);
      G[c].diagonal().array() -= kappa;
      G[c] *= channel_weight(ch.m);
    }
    for (int tries = 0;; ++tries) {
      std::vector<Eigen::MatrixXd> Dn(C);
      double lin = 0.0, sq = 0.0;
      for (int c = 0; c < C; ++c) {
        Dn[c] = project(D[c] - t * G[c]);
        Eigen::MatrixXd d = Dn[c] - D[c];
        lin += G[c].cwiseProduct(d).sum();
        sq += d.squaredNorm();
      }
      Eval next = evaluate(Dn);
      if (next.f <= cur.f + lin + 0.5 * sq / t + 1e-15 * std::abs(cur.f) || tries > 60) {
        step_norm = std::sqrt(sq) / t;
        D = std::move(Dn);
        cur = std::move(next);
        break;
      }
      t *= 0.5;
    }
    history.push_back({it, step_norm, cur.f, 0.0});
    if (step_norm < opt.tol) break;
    t = std::min(t * 1.5, 1e3);
  }
  if (!(step_norm < opt.tol)) throw_unconverged("projected gradient", history);
  for (int c = 0; c < C; ++c) q[c] = D[c] - as.channels[c].gamma;
  return finish(std::move(q), {}, std::move(cur.rho), cur.en, kappa, step_norm, std::move(history));
}

bool DefectChecks::ok(double tol) const {
  return constraint_min >= -tol && constraint_max <= 1.0 + tol && qpp_min >= -tol && qmm_max <= tol &&
         q2_margin >= -tol && asymmetry <= tol;
}

DefectChecks check_defect(const DefectState& s, const ActiveSpace& as) {
  DefectChecks r;
  r.constraint_min = r.qpp_min = r.q2_margin = std::numeric_limits<double>::infinity();
  r.constraint_max = r.qmm_max = -std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < as.channels.size(); ++c) {
    const ActiveChannel& ch = as.channels[c];
    const Eigen::MatrixXd& Q = s.q[c];
    const Eigen::MatrixXd& g = ch.gamma;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(ch.size(), ch.size());
    r.asymmetry = std::max(r.asymmetry, (Q - Q.transpose()).cwiseAbs().maxCoeff());
    Eigen::VectorXd ev = sym_eigenvalues(g + Q);
    r.constraint_min = std::min(r.constraint_min, ev.minCoeff());
    r.constraint_max = std::max(r.constraint_max, ev.maxCoeff());
    Eigen::MatrixXd qpp = (I - g) * Q * (I - g), qmm = g * Q * g;
    // eigenvalues of the blocks on their own ranges; the zero eigenvalues from the other range are harmless
    r.qpp_min = std::min(r.qpp_min, sym_eigenvalues(qpp).minCoeff());
    r.qmm_max = std::max(r.qmm_max, sym_eigenvalues(qmm).maxCoeff());
    r.q2_margin = std::min(r.q2_margin, sym_eigenvalues(qpp - qmm - Q * Q).minCoeff());
  }
  return r;
}

double pure_discretization_floor(const JunctionConfig& cfg, const ReferenceState& ref) {
  const double margin = 2.0 * cfg.a_max();
  ScalarField dl = PeriodicInterpolant(cfg.left.state.density).sample(cfg.box) - ref.left_box_density;
  ScalarField dr = PeriodicInterpolant(cfg.right.state.density).sample(cfg.box) - ref.right_box_density;
  return std::max(interior_l2(dl, margin), interior_l2(dr, margin));
}

ChiIndependence chi_independence_check(const JunctionConfig& cfg, const ChiProfile& chi_a, const ChiProfile& chi_b,
                                       const DefectWindow& window, const DefectOptions& opt) {
  opt.validate();
  ChiIndependence out;
  ChiBranch* branches[2] = {&out.a, &out.b};
  const ChiProfile* chis[2] = {&chi_a, &chi_b};
  double floors[2] = {0.0, 0.0};
  parallel_for(2, [&](int k) {
    try {
      ReferenceState ref = reference_density(cfg, *chis[k]);
      NuChi nu = nu_chi(cfg, ref);
      ChiBranch& b = *branches[k];
      b.chi = *chis[k];
      b.occupied_count = ref.occupied_count;
      b.nu_charge = nu.charge;
      b.nu_self_energy = nu.self_energy;
      ActiveSpace as;
      if (window.space == DefectSpace::full) {
        b.defect = minimize_defect_full(ref, nu.nu, opt, as);
      } else {
        as = build_active_space(ref, ref.fermi_level - window.below, ref.fermi_level + window.above);
        b.defect = minimize_defect(as, nu.nu, opt);
      }
      b.active_occ = as.n_occ();
      b.active_virt = as.n_virt();
      b.checks = check_defect(b.defect, as);
      b.total_density = ref.density + b.defect.density;
      floors[k] = pure_discretization_floor(cfg, ref);
    } catch (const Error& e) {
      throw Error(e.code(), std::string("chi branch ") + (k == 0 ? "a" : "b") + ": " + e.what());
    }
  });
  out.l2_diff = interior_l2(out.a.total_density - out.b.total_density, 2.0 * cfg.a_max());
  out.floor = std::max(floors[0], floors[1]);
  out.tol = opt.tol;
  out.bound = 5.0 * (out.tol + out.floor);
  out.pass = out.l2_diff < out.bound;
  return out;
}

}  // namespace qrhf
