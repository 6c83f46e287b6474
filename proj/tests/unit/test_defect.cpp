#include <cmath>

#include "doctest.h"
#include "junction_fixture.hpp"
#include "qrhf/errors.hpp"

using namespace qrhf;

namespace {
const ActiveSpace& space() {
  static const ActiveSpace as = [] {
    const fixture::Pair& p = fixture::pair();
    return build_active_space(p.ref, p.ref.fermi_level - 6.0, p.ref.fermi_level + 2.0);
  }();
  return as;
}

const DefectState& fixed_point() {
  static const DefectState s = minimize_defect(space(), fixture::pair().nu.nu, {});
  return s;
}

double gap_kappa(const ActiveSpace& as, double t) { return as.occupied_top + t * (as.fermi_level - as.occupied_top); }
}  // namespace

TEST_CASE("active space is orthonormal and holds every occupied state") {
  const fixture::Pair& p = fixture::pair();
  const ActiveSpace& as = space();
  CHECK(as.orthonormality_error() < 1e-10);
  CHECK(as.occupied_weight() == p.ref.occupied_count);
  CHECK(as.n_virt() > 0);
  CHECK(as.occupied_top < as.fermi_level);
  for (const ActiveChannel& ch : as.channels) {
    CHECK(ch.gamma.trace() == doctest::Approx(ch.n_occ));
    for (int i = 0; i < ch.size(); ++i) CHECK((ch.values(i) < as.fermi_level) == (i < ch.n_occ));
  }
}

TEST_CASE("active space window checks") {
  const fixture::Pair& p = fixture::pair();
  CHECK_THROWS_AS(build_active_space(p.ref, p.ref.fermi_level + 0.1, p.ref.fermi_level + 2.0), ValidationError);
  CHECK_THROWS_AS(build_active_space(p.ref, p.ref.fermi_level - 2.0, p.ref.fermi_level + 1e-3), ValidationError);
}

TEST_CASE("density of gamma restricted to the window is the reference density") {
  const fixture::Pair& p = fixture::pair();
  const ActiveSpace& as = space();
  std::vector<Eigen::MatrixXd> g;
  for (const ActiveChannel& ch : as.channels) g.push_back(ch.gamma);
  ScalarField rho = density_of(as, g);
  CHECK((rho - p.ref.density).l2_norm() < 1e-10 * p.ref.density.l2_norm());
}

TEST_CASE("zero seam charge gives Q = 0 exactly") {
  ScalarField zero = ScalarField::on(space().grid);
  DefectState s = minimize_defect(space(), zero, {});
  CHECK(s.iterations == 1);
  for (const Eigen::MatrixXd& q : s.q) CHECK(q.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.density.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.energy.energy == 0.0);

  ActiveSpace fs;
  DefectState f = minimize_defect_full(fixture::pair().ref, zero, {}, fs);
  CHECK(f.iterations == 1);
  CHECK(f.density.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("defect fixed point satisfies the constraints") {
  const DefectState& s = fixed_point();
  DefectOptions opt;
  CHECK(s.residual < opt.tol);
  CHECK(s.density.l2_norm() > 0.0);
  DefectChecks c = check_defect(s, space());
  CHECK(c.constraint_min >= -1e-9);
  CHECK(c.constraint_max <= 1.0 + 1e-9);
  CHECK(c.qpp_min >= -1e-9);
  CHECK(c.qmm_max <= 1e-9);
  CHECK(c.q2_margin >= -1e-9);
  CHECK(c.ok());
  for (const DefectLogEntry& e : s.history) CHECK(e.constraint_violation < 1e-9);
  // Q = 0 is admissible with objective 0
  CHECK(s.energy.objective < 0.0);
}

TEST_CASE("objective does not depend on kappa inside the gap") {
  const DefectState& s = fixed_point();
  const ScalarField& nu = fixture::pair().nu.nu;
  double e0 = defect_energy(s.q, s.density, space(), nu, gap_kappa(space(), 0.5)).energy;
  for (double t : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    DefectEnergy e = defect_energy(s.q, s.density, space(), nu, gap_kappa(space(), t));
    CHECK(std::abs(e.energy - e0) < 1e-10);
  }
  CHECK_THROWS_AS(defect_energy(s.q, s.density, space(), nu, space().fermi_level + 0.1), DomainError);
  CHECK_THROWS_AS(defect_energy(s.q, s.density, space(), nu, space().occupied_top - 0.1), DomainError);
}

TEST_CASE("fixed point agrees with projected gradient minimization") {
  const ScalarField& nu = fixture::pair().nu.nu;
  for (double scale : {0.25, 0.5, 1.0, 1.5, -0.5}) {
    CAPTURE(scale);
    ScalarField n = scale * nu;
    DefectState s = minimize_defect(space(), n, {});
    DefectState p = minimize_defect_projected(space(), n, s.kappa);
    CHECK((p.density - s.density).l2_norm() < 1e-7);
    CHECK(p.energy.objective == doctest::Approx(s.energy.objective).epsilon(1e-8));
    CHECK(check_defect(p, space()).ok(1e-8));
  }
}

TEST_CASE("random admissible starts reach the same density") {
  DefectOptions opt;
  for (unsigned seed : {3u, 17u}) {
    opt.seed = seed;
    DefectState r = minimize_defect(space(), fixture::pair().nu.nu, opt);
    CHECK((r.density - fixed_point().density).l2_norm() < 10 * opt.tol);
  }
}

TEST_CASE("defect density screens the seam charge") {
  const ScalarField& nu = fixture::pair().nu.nu;
  const DefectState& s = fixed_point();
  const FreeCoulombSolver& solver = free_coulomb_solver(space().grid);
  ScalarField rest = s.density - nu;
  CHECK(rest.inner(solver.potential(rest)) < nu.inner(solver.potential(nu)));
}

TEST_CASE("options are validated") {
  DefectOptions o;
  o.tol = -1.0;
  CHECK_THROWS_AS(o.validate(), ValidationError);
  o = {};
  o.mix = 0.0;
  CHECK_THROWS_AS(o.validate(), ValidationError);
  o = {};
  o.max_iter = 1;
  CHECK_THROWS_AS(minimize_defect(space(), fixture::pair().nu.nu, o), ConvergenceError);
}

TEST_CASE("full-box defect") {
  const fixture::Pair& p = fixture::pair();
  ActiveSpace fs;
  DefectState f = minimize_defect_full(p.ref, p.nu.nu, {}, fs);
  CHECK(f.residual < 1e-8);
  CHECK(fs.orthonormality_error() < 1e-10);
  CHECK(fs.occupied_weight() == p.ref.occupied_count);
  CHECK(check_defect(f, fs).ok());
  // the window space is a subspace of the box
  CHECK(f.energy.objective <= fixed_point().energy.objective + 1e-10);
  double e0 = f.energy.energy;
  for (double t : {0.1, 0.3, 0.7, 0.9}) CHECK(std::abs(defect_energy(f.q, f.density, fs, p.nu.nu, gap_kappa(fs, t)).energy - e0) < 1e-10);

  DefectOptions opt;
  opt.seed = 5;
  ActiveSpace fr;
  DefectState r = minimize_defect_full(p.ref, p.nu.nu, opt, fr);
  CHECK((r.density - f.density).l2_norm() < 10 * opt.tol);
}

TEST_CASE("total density does not depend on the cutoff") {
  const fixture::Pair& p = fixture::pair();
  std::vector<ChiProfile> chis = standard_chi_profiles();
  DefectWindow w;
  w.below = 6.0;
  ChiIndependence same = chi_independence_check(p.cfg, chis[0], chis[0], w, {});
  CHECK(same.l2_diff == 0.0);

  w.space = DefectSpace::full;
  ChiIndependence r = chi_independence_check(p.cfg, chis[0], chis[2], w, {});
  CHECK(r.a.checks.ok());
  CHECK(r.b.checks.ok());
  CHECK(r.floor > 0.0);
  CHECK(r.pass);
  CHECK(r.l2_diff < r.bound);
  // the defect corrects most of the difference between the two reference densities
  ReferenceState ra = reference_density(p.cfg, chis[0]), rb = reference_density(p.cfg, chis[2]);
  CHECK(r.l2_diff < 0.5 * interior_l2(ra.density - rb.density, 2.0 * p.cfg.a_max()));
}
