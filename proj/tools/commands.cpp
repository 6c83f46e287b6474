#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "checkpoint.hpp"
#include "qrhf/coulomb.hpp"
#include "qrhf/errors.hpp"
#include "qrhf/specfun.hpp"

namespace qrhf::cli {

using nlohmann::json;

namespace {
constexpr double pi = std::numbers::pi;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  Csv(const std::string& path, const std::vector<std::string>& header) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path);
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  ~Csv() = default;

 private:
  std::string path_;
  std::ofstream out_;
};

std::string join(const std::string& dir, const std::string& name) { return (std::filesystem::path(dir) / name).string(); }

void prepare(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  std::ofstream probe(join(dir, ".write_test"));
  if (!probe) throw IoError("output directory " + dir + " is not writable");
  probe.close();
  std::filesystem::remove(join(dir, ".write_test"), ec);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void note(const char* fmt, double v) {
  std::fprintf(stderr, fmt, v);
  std::fputc('\n', stderr);
}

// int f(x, r) 2 pi r dr at every x node
Eigen::VectorXd line_density(const ScalarField& f) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.n_x());
  for (int i = 0; i < f.n_x(); ++i)
    for (int j = 0; j < f.n_r(); ++j) out(i) += f(i, j) * f.radial.weight(j);
  return out;
}

void write_bands_csv(const BandStructure& b, const std::string& path) {
  Csv csv(path, {"xi", "m", "n", "lambda"});
  for (int k = 0; k < b.grid.n_xi; ++k)
    for (int m = 0; m <= b.grid.m_max; ++m) {
      const Eigen::VectorXd& v = b.values(k, m);
      for (int n = 0; n < v.size(); ++n) csv.row({num(b.grid.xi(k)), std::to_string(m), std::to_string(n), num(v(n))});
    }
}

// Zeros of J_m by bracketing on a fine grid and bisection.
std::vector<double> bessel_zeros(int m, int count) {
  std::vector<double> z;
  double x = 0.5, fx = std::cyl_bessel_j(m, x);
  while (static_cast<int>(z.size()) < count) {
    double y = x + 0.05, fy = std::cyl_bessel_j(m, y);
    if (fx * fy < 0.0) {
      double lo = x, hi = y;
      for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        (std::cyl_bessel_j(m, lo) * std::cyl_bessel_j(m, mid) <= 0.0 ? hi : lo) = mid;
      }
      z.push_back(0.5 * (lo + hi));
    }
    x = y;
    fx = fy;
  }
  return z;
}

json gap_json(const GapReport& g) {
  return {{"sigma_a", g.sigma_a}, {"sigma_b", g.sigma_b}, {"eps_left", g.eps_left},
          {"eps_right", g.eps_right}, {"fermi", g.fermi}, {"ok", g.ok}};
}

json chi_json(const ChiProfile& c) { return {{"order", c.order}, {"lo", c.lo_frac}, {"hi", c.hi_frac}}; }

json checks_json(const DefectChecks& c) {
  return {{"constraint_min", c.constraint_min}, {"constraint_max", c.constraint_max}, {"qpp_min", c.qpp_min},
          {"qmm_max", c.qmm_max}, {"q2_margin", c.q2_margin}, {"asymmetry", c.asymmetry}, {"ok", c.ok()}};
}

json energy_json(const DefectEnergy& e) {
  return {{"kinetic", e.kinetic}, {"cross", e.cross}, {"self", e.self},
          {"energy", e.energy}, {"trace_gamma", e.trace_gamma}, {"objective", e.objective}};
}

JunctionConfig make_junction(const RunConfig& c, const PeriodicMaterial& left, const PeriodicMaterial& right) {
  JunctionConfig cfg;
  cfg.left = left;
  cfg.right = right;
  cfg.chi = c.junction.chi;
  cfg.m_max = c.junction.m_max;
  cfg.box = SupercellGrid::with_spacing(c.junction.half_length, c.junction.dx, left.state.grid.radial());
  if (c.junction.v_amplitude != 0.0) {
    cfg.v_extra = ScalarField::on(cfg.box);
    const double w2 = c.junction.v_width * c.junction.v_width;
    for (int i = 0; i < cfg.box.n_x; ++i)
      for (int j = 0; j < cfg.box.n_r; ++j) {
        double x = cfg.box.x(i), r = cfg.box.radial().node(j);
        cfg.v_extra(i, j) = c.junction.v_amplitude * std::exp(-(x * x + r * r) / w2);
      }
  }
  cfg.validate();
  return cfg;
}

json junction_reports(const JunctionConfig& cfg, const ReferenceState& ref, const std::vector<ChiProfile>& chis,
                      const std::string& out) {
  json s;
  s["gap"] = gap_json(ref.gap);
  s["fermi_level"] = ref.fermi_level;
  s["occupied_count"] = ref.occupied_count;
  s["box"] = {{"half_length", cfg.box.half_length}, {"n_x", cfg.box.n_x}, {"dx", cfg.box.dx()},
              {"r_max", cfg.box.r_max}, {"n_r", cfg.box.n_r}, {"m_max", ref.m_max}};
  s["chi"] = chi_json(ref.chi);
  s["warnings"] = ref.warnings;

  DefectDecay d = density_defect_decay(cfg, ref);
  {
    Csv csv(join(out, "defect_decay.csv"), {"x_lo", "x_hi", "mass"});
    for (size_t k = 0; k < d.mass.size(); ++k) csv.row({num(d.window_lo[k]), num(d.window_hi[k]), num(d.mass[k])});
  }
  s["defect_decay"] = {{"rate", d.rate}, {"r2", d.r2}, {"rate_left", d.rate_left}, {"rate_right", d.rate_right},
                       {"r2_left", d.r2_left}, {"r2_right", d.r2_right}, {"fit_inner", d.fit_inner},
                       {"fit_outer", d.fit_outer}, {"points", d.points}, {"window_shrunk", d.window_shrunk},
                       {"interior_max", d.interior_max}};
  s["poisson_consistency"] = poisson_consistency(cfg, ref.chi);

  NuChi nu = nu_chi(cfg, ref);
  s["nu"] = {{"charge", nu.charge}, {"self_energy", nu.self_energy}, {"boundary_mass", nu.boundary.boundary_mass}};
  {
    ScalarField dd = density_defect(cfg, ref);
    Eigen::VectorXd a = line_density(ref.density), b = line_density(dd), c = line_density(nu.nu);
    Csv csv(join(out, "profiles.csv"), {"x", "rho_chi", "density_defect", "nu"});
    for (int i = 0; i < cfg.box.n_x; ++i) csv.row({num(cfg.box.x(i)), num(a(i)), num(b(i)), num(c(i))});
  }

  SpectrumUnionReport sp = spectrum_union_check(cfg, chis);
  {
    Csv csv(join(out, "spectrum.csv"), {"chi", "m", "lambda", "class", "seam_fraction", "wall_fraction"});
    for (size_t k = 0; k < sp.per_chi.size(); ++k)
      for (const SpectrumEntry& e : sp.per_chi[k].entries) {
        const char* cls = e.in_bands ? "band" : e.wall_state ? "wall" : e.seam_fraction >= 0.9 ? "seam" : "other";
        csv.row({std::to_string(k), std::to_string(e.m), num(e.lambda), cls, num(e.seam_fraction), num(e.wall_fraction)});
      }
  }
  json per = json::array();
  for (const SpectrumClassification& c : sp.per_chi)
    per.push_back({{"chi", chi_json(c.chi)}, {"band_states", c.band_states}, {"gap_states", c.gap_states},
                   {"seam_gap_states", c.seam_gap_states}, {"wall_gap_states", c.wall_gap_states},
                   {"other_gap_states", c.other_gap_states}});
  s["spectrum"] = {{"delta_band", sp.delta_band}, {"pure_discrepancy_left", sp.pure_discrepancy_left},
                   {"pure_discrepancy_right", sp.pure_discrepancy_right}, {"stable", sp.stable},
                   {"gap_states_localized", sp.gap_states_localized}, {"per_chi", per}};
  return s;
}

struct DefectRunResult {
  DefectState state;
  ActiveSpace space;
};

DefectRunResult solve_defect(const ReferenceState& ref, const ScalarField& nu, const DefectRun& d, const DefectOptions& o) {
  DefectRunResult r;
  if (d.window.space == DefectSpace::full) {
    r.state = minimize_defect_full(ref, nu, o, r.space);
  } else {
    r.space = build_active_space(ref, ref.fermi_level - d.window.below, ref.fermi_level + d.window.above);
    r.state = minimize_defect(r.space, nu, o);
  }
  return r;
}

json kappa_scan(const DefectState& s, const ActiveSpace& as, const ScalarField& nu) {
  json scan = json::array();
  double e0 = s.energy.energy, spread = 0.0;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    double kappa = as.occupied_top + t * (as.fermi_level - as.occupied_top);
    DefectEnergy e = defect_energy(s.q, s.density, as, nu, kappa);
    spread = std::max(spread, std::abs(e.energy - e0));
    scan.push_back({{"kappa", kappa}, {"energy", e.energy}, {"objective", e.objective}});
  }
  return {{"values", scan}, {"max_deviation", spread}};
}
}  // namespace

void export_material(const PeriodicMaterial& m, const std::string& out) {
  prepare(out);
  write_bands_csv(m.state.bands, join(out, "bands.csv"));
  write_field_csv(m.state.density, join(out, "density.csv"));
  write_field_csv(m.state.potential, join(out, "potential.csv"));
}

PeriodicMaterial build_material(const MaterialConfig& m, const CellGrid& base, const ScfConfig& scf) {
  CellGrid grid = base;
  grid.period_a = m.nuclei.period_a;
  grid.validate();
  ScfOptions o = scf.options;
  o.charge_z = m.nuclei.charge_z;
  if (m.designed) return designed_material(designed_charge(m.nuclei, grid, m.contrast, m.width), grid, o);
  PeriodicMaterial out;
  out.mu = build_nuclear_density(m.nuclei, grid);
  ScalarField rho0 = initial_density(out.mu, grid, m.nuclei.charge_z, scf.initial);
  out.state = scf_solve(out.mu, grid, o, &rho0);
  return out;
}

json run_greens(const RunConfig& c, const std::string& out) {
  prepare(out);
  const GreensConfig& g = c.greens;
  Stopwatch sw;
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> ux(-0.5, 0.5), ur(g.r_min, g.r_max);
  double worst = 0.0;
  {
    Csv csv(join(out, "greens.csv"), {"x", "r", "series", "lattice", "abs_diff"});
    for (int p = 0; p < g.points; ++p) {
      double x = ux(rng), r = ur(rng);
      double s = specfun::greens_series(x, r), l = specfun::greens_lattice(x, r);
      worst = std::max(worst, std::abs(s - l));
      csv.row({num(x), num(r), num(s), num(l), num(std::abs(s - l))});
    }
  }
  const double mean = specfun::greens_tilde_cell_mean();

  CellGrid fg;
  fg.n_x = g.fourier_n_x;
  fg.r_max = g.fourier_r_max;
  fg.n_r = g.fourier_n_r;
  MixedSpectrum s = mixed_fourier_forward(greens_cell_field(fg));
  const double d = std::max(fg.dx(), fg.radial().h()), k_res = 2.0 * pi / 24.0 / d;
  double fworst = 0.0;
  int modes = 0;
  {
    Csv csv(join(out, "fourier.csv"), {"n", "j", "k", "computed", "exact", "rel_error", "resolved"});
    for (int n = -fg.n_x / 2; n < fg.n_x / 2; ++n) {
      if (2.0 * pi * std::abs(n) > 2.0 * k_res) continue;
      for (int j = 0; j < fg.n_r && s.k_grid(j) <= 2.0 * k_res; ++j) {
        double K2 = 4.0 * pi * pi * n * n + s.k_grid(j) * s.k_grid(j), exact = 2.0 / K2;
        double val = s.at(n, j).real(), rel = std::abs(val / exact - 1.0);
        bool resolved = j >= 3 && std::sqrt(K2) <= k_res;
        if (resolved) {
          fworst = std::max(fworst, rel);
          ++modes;
        }
        csv.row({std::to_string(n), std::to_string(j), num(s.k_grid(j)), num(val), num(exact), num(rel),
                 resolved ? "1" : "0"});
      }
    }
  }
  json j = {{"command", "greens"},
            {"seed", c.seed},
            {"points", g.points},
            {"max_abs_diff", worst},
            {"representations_agree", worst < g.tol},
            {"tilde_cell_mean", mean},
            {"zero_mean", std::abs(mean) < 1e-6},
            {"fourier", {{"n_x", fg.n_x}, {"r_max", fg.r_max}, {"n_r", fg.n_r}, {"resolved_modes", modes},
                         {"max_rel_error", fworst}, {"pass", modes > 0 && fworst < g.fourier_tol}}}};
  write_json(join(out, "summary.json"), j);
  note("greens: %.1f s", sw.seconds());
  return j;
}

json run_bands(const RunConfig& c, const std::string& out) {
  prepare(out);
  CellGrid grid = c.grid;
  ScalarField V;
  bool free = c.bands.checkpoint.empty();
  if (free) {
    V = ScalarField::on(grid);
  } else {
    PeriodicMaterial m = load_material(c.resolve(c.bands.checkpoint));
    grid = m.state.grid;
    V = m.state.potential;
  }
  BandStructure b = band_structure(V, grid, c.bands.e_cap);
  write_bands_csv(b, join(out, "bands.csv"));
  json j = {{"command", "bands"}, {"e_cap", b.e_cap}, {"n_pw", b.n_pw}, {"free", free}};
  if (free) {
    // continuum free levels 1/2 ((2 pi n / a + xi)^2 + (j_{m,k} / r_max)^2)
    double worst = 0.0;
    const double a = grid.period_a;
    for (int m = 0; m <= grid.m_max; ++m) {
      std::vector<double> z = bessel_zeros(m, c.bands.levels);
      for (int k = 0; k < grid.n_xi; ++k) {
        std::vector<double> exact;
        for (int n = -c.bands.levels; n <= c.bands.levels; ++n)
          for (double zz : z) {
            double p = 2.0 * pi * n / a + grid.xi(k), q = zz / grid.r_max;
            exact.push_back(0.5 * (p * p + q * q));
          }
        std::sort(exact.begin(), exact.end());
        const Eigen::VectorXd& v = b.values(k, m);
        for (int n = 0; n < std::min<int>(c.bands.levels, v.size()); ++n)
          worst = std::max(worst, std::abs(v(n) - exact[n]) / exact[n]);
      }
    }
    j["free_oracle_max_rel_error"] = worst;
  }
  write_json(join(out, "summary.json"), j);
  return j;
}

json run_scf(const RunConfig& c, const std::string& out) {
  prepare(out);
  Stopwatch sw;
  PeriodicMaterial m = build_material(c.material, c.grid, c.scf);
  const GroundState& s = m.state;
  material_checkpoint(m, make_provenance(c.hash)).save(join(out, "ground_state.qrhf"));
  export_material(m, out);
  {
    Csv csv(join(out, "scf_log.csv"), {"iter", "residual", "fermi", "energy"});
    for (const ScfLogEntry& e : s.history) csv.row({std::to_string(e.iter), num(e.residual), num(e.fermi), num(e.energy)});
  }

  EnergyComponents en = total_energy(s, m.mu);
  HoffmannOstenhof ho = hoffmann_ostenhof_check(s.density, s.energy_kinetic);
  DecayFit fit = decay_fit(s.density, 2.0);
  const double charge = s.density.integral();
  json j = {{"command", "scf"},
            {"designed", c.material.designed},
            {"Z", s.charge_z},
            {"a", s.grid.period_a},
            {"iterations", s.iterations},
            {"residual", s.scf_residual},
            {"fermi_level", s.fermi_level},
            {"homo", s.homo},
            {"lumo", s.lumo},
            {"negative_count", s.negative_count},
            {"energy", {{"kinetic", en.kinetic}, {"coulomb", en.coulomb}, {"total", en.total}}},
            {"charge", charge},
            {"charge_error", std::abs(charge - s.charge_z)},
            {"hoffmann_ostenhof", {{"gradient_sqrt_rho", ho.gradient_sqrt_rho}, {"kinetic_trace", ho.kinetic_trace},
                                   {"holds", ho.holds}}},
            {"decay_fit", {{"rate", fit.rate}, {"r2", fit.r2}, {"r_start", fit.r_start}, {"r_end", fit.r_end},
                           {"points", fit.points}}},
            {"radial_moment", radial_moment(s.density)}};
  if (c.scf.summability) {
    CellGrid big = c.grid;
    big.r_max = 1.5 * c.grid.r_max;
    big.n_r = static_cast<int>(std::lround(1.5 * c.grid.n_r));
    PeriodicMaterial mb = build_material(c.material, big, c.scf);
    double m1 = radial_moment(s.density), m2 = radial_moment(mb.state.density);
    j["summability"] = {{"moment", m1}, {"moment_large_box", m2}, {"relative_change", std::abs(m2 - m1) / m1}};
  }
  write_json(join(out, "summary.json"), j);
  note("scf: %.1f s", sw.seconds());
  return j;
}

json run_junction(const RunConfig& c, const std::string& out) {
  if (c.junction.left_checkpoint.empty() || c.junction.right_checkpoint.empty())
    throw ValidationError("junction: left_checkpoint and right_checkpoint are required");
  prepare(out);
  Stopwatch sw;
  const std::string lp = std::filesystem::absolute(c.resolve(c.junction.left_checkpoint)).string();
  const std::string rp = std::filesystem::absolute(c.resolve(c.junction.right_checkpoint)).string();
  PeriodicMaterial left = load_material(lp), right = load_material(rp);
  JunctionConfig cfg = make_junction(c, left, right);
  ReferenceState ref = reference_density(cfg);
  JunctionRecord rec{lp, rp, cfg.v_extra, cfg.m_max, ref};
  junction_checkpoint(rec, make_provenance(c.hash)).save(join(out, "junction.qrhf"));
  json j = junction_reports(cfg, ref, c.junction.chi_profiles, out);
  j["command"] = "junction";
  write_json(join(out, "summary.json"), j);
  note("junction: %.1f s", sw.seconds());
  return j;
}

json run_defect(const RunConfig& c, const std::string& out) {
  if (c.defect.junction_checkpoint.empty()) throw ValidationError("defect: junction_checkpoint is required");
  prepare(out);
  Stopwatch sw;
  JunctionRecord rec = load_junction(c.resolve(c.defect.junction_checkpoint));
  JunctionConfig cfg;
  cfg.left = load_material(rec.left_path);
  cfg.right = load_material(rec.right_path);
  cfg.chi = rec.ref.chi;
  cfg.box = rec.ref.grid;
  cfg.m_max = rec.m_max;
  cfg.v_extra = rec.v_extra;
  cfg.validate();
  const ReferenceState& ref = rec.ref;
  NuChi nu = nu_chi(cfg, ref);

  DefectRunResult r = solve_defect(ref, nu.nu, c.defect, c.defect.options);
  const DefectState& s = r.state;
  const ActiveSpace& as = r.space;
  DefectChecks chk = check_defect(s, as);

  {
    Csv csv(join(out, "q_spectrum.csv"), {"m", "index", "q_eigenvalue"});
    for (size_t ch = 0; ch < s.q.size(); ++ch) {
      Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.q[ch], Eigen::EigenvaluesOnly).eigenvalues();
      for (int i = 0; i < ev.size(); ++i) csv.row({std::to_string(as.channels[ch].m), std::to_string(i), num(ev(i))});
    }
  }
  {
    Eigen::VectorXd p = line_density(s.density);
    Csv csv(join(out, "rho_q_profile.csv"), {"x", "rho_q"});
    for (int i = 0; i < ref.grid.n_x; ++i) csv.row({num(ref.grid.x(i)), num(p(i))});
  }
  write_field_csv(s.density, join(out, "rho_q.csv"));
  {
    Csv csv(join(out, "energy_log.csv"), {"iter", "residual", "objective", "constraint_violation"});
    for (const DefectLogEntry& e : s.history)
      csv.row({std::to_string(e.iter), num(e.residual), num(e.objective), num(e.constraint_violation)});
  }

  json j = {{"command", "defect"},
            {"space", c.defect.window.space == DefectSpace::full ? "full" : "window"},
            {"active_occ", as.n_occ()},
            {"active_virt", as.n_virt()},
            {"iterations", s.iterations},
            {"residual", s.residual},
            {"rho_q_l2", s.density.l2_norm()},
            {"rho_q_charge", s.density.integral()},
            {"nu_charge", nu.charge},
            {"kappa_mid", s.kappa},
            {"energy", energy_json(s.energy)},
            {"checks", checks_json(chk)},
            {"kappa_independence", kappa_scan(s, as, nu.nu)}};
  if (c.defect.kappa) j["energy_at_kappa"] = energy_json(defect_energy(s.q, s.density, as, nu.nu, *c.defect.kappa));
  if (c.defect.projected_checks > 0) {
    ActiveSpace ws = c.defect.window.space == DefectSpace::window
                         ? as
                         : build_active_space(ref, ref.fermi_level - c.defect.window.below,
                                              ref.fermi_level + c.defect.window.above);
    json list = json::array();
    for (int k = 0; k < c.defect.projected_checks; ++k) {
      double scale = 0.25 * (k + 1);
      ScalarField n = scale * nu.nu;
      DefectState fp = minimize_defect(ws, n, c.defect.options);
      DefectState pg = minimize_defect_projected(ws, n, fp.kappa);
      list.push_back({{"scale", scale}, {"density_l2_diff", (fp.density - pg.density).l2_norm()},
                      {"objective_fixed_point", fp.energy.objective}, {"objective_projected", pg.energy.objective}});
    }
    j["projected_gradient"] = list;
  }
  write_json(join(out, "summary.json"), j);
  note("defect: %.1f s", sw.seconds());
  return j;
}

json run_verify(const RunConfig& c, const std::string& out) {
  prepare(out);
  Stopwatch sw;
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool pass, double value, double bound) {
    checks.push_back({{"name", name}, {"pass", pass}, {"value", value}, {"bound", bound}});
    all = all && pass;
  };

  PeriodicMaterial left = build_material(c.left, c.grid, c.scf);
  PeriodicMaterial right = build_material(c.right, c.grid, c.scf);
  JunctionConfig cfg = make_junction(c, left, right);
  GapReport gap = gap_check(left.state, right.state);
  record("common_gap", gap.ok, gap.sigma_a - std::min(gap.eps_left, gap.eps_right), 0.0);
  if (!gap.ok) {
    json j = {{"command", "verify"}, {"seed", c.seed}, {"checks", checks}, {"all_pass", false}, {"gap", gap_json(gap)}};
    write_json(join(out, "verify_report.json"), j);
    return j;
  }
  ReferenceState ref = reference_density(cfg);
  json jr = junction_reports(cfg, ref, c.junction.chi_profiles, out);
  record("defect_decay_rate", jr["defect_decay"]["rate"].get<double>() > 0.0, jr["defect_decay"]["rate"], 0.0);
  record("defect_decay_r2", jr["defect_decay"]["r2"].get<double>() > 0.95, jr["defect_decay"]["r2"], 0.95);
  record("spectrum_stable", jr["spectrum"]["stable"].get<bool>(), jr["spectrum"]["stable"].get<bool>(), 1.0);
  record("gap_states_localized", jr["spectrum"]["gap_states_localized"].get<bool>(),
         jr["spectrum"]["gap_states_localized"].get<bool>(), 1.0);

  NuChi nu = nu_chi(cfg, ref);
  DefectRunResult r = solve_defect(ref, nu.nu, c.defect, c.defect.options);
  DefectChecks chk = check_defect(r.state, r.space);
  record("defect_constraints", chk.ok(1e-9), std::min(chk.constraint_min, 1.0 - chk.constraint_max), -1e-9);
  json ks = kappa_scan(r.state, r.space, nu.nu);
  record("kappa_independence", ks["max_deviation"].get<double>() < 1e-10, ks["max_deviation"], 1e-10);
  for (int k = 0; k < c.verify.random_starts; ++k) {
    DefectOptions o = c.defect.options;
    o.seed = c.seed + static_cast<unsigned>(k);
    DefectRunResult rr = solve_defect(ref, nu.nu, c.defect, o);
    double diff = (rr.state.density - r.state.density).l2_norm();
    record("random_start_" + std::to_string(k), diff < 10.0 * o.tol, diff, 10.0 * o.tol);
  }

  const ChiProfile& ca = c.junction.chi_profiles[c.verify.chi_a];
  const ChiProfile& cb = c.junction.chi_profiles[c.verify.chi_b];
  ChiIndependence ci = chi_independence_check(cfg, ca, cb, c.defect.window, c.defect.options);
  record("chi_independence", ci.pass, ci.l2_diff, ci.bound);
  {
    Eigen::VectorXd a = line_density(ci.a.total_density), b = line_density(ci.b.total_density);
    Csv csv(join(out, "total_density.csv"), {"x", "total_a", "total_b", "difference"});
    for (int i = 0; i < cfg.box.n_x; ++i) csv.row({num(cfg.box.x(i)), num(a(i)), num(b(i)), num(a(i) - b(i))});
  }

  json j = {{"command", "verify"},
            {"seed", c.seed},
            {"space", c.defect.window.space == DefectSpace::full ? "full" : "window"},
            {"checks", checks},
            {"all_pass", all},
            {"junction", jr},
            {"defect", {{"iterations", r.state.iterations}, {"energy", energy_json(r.state.energy)},
                        {"checks", checks_json(chk)}, {"kappa_independence", ks}}},
            {"chi_independence", {{"chi_a", chi_json(ca)}, {"chi_b", chi_json(cb)}, {"l2_diff", ci.l2_diff},
                                  {"floor", ci.floor}, {"tol", ci.tol}, {"bound", ci.bound}, {"pass", ci.pass},
                                  {"iterations_a", ci.a.defect.iterations}, {"iterations_b", ci.b.defect.iterations}}}};
  write_json(join(out, "verify_report.json"), j);
  {
    std::ofstream txt(join(out, "verify_report.txt"), std::ios::trunc);
    if (!txt) throw IoError("cannot write verify_report.txt");
    for (const json& k : checks)
      txt << (k["pass"].get<bool>() ? "PASS " : "FAIL ") << k["name"].get<std::string>() << " value=" << k["value"].dump()
          << " bound=" << k["bound"].dump() << '\n';
    txt << (all ? "ALL PASS" : "SOME CHECKS FAILED") << '\n';
  }
  note("verify: %.1f s", sw.seconds());
  return j;
}

json run_command(const std::string& command, const RunConfig& c, const std::string& out) {
  if (command == "greens") return run_greens(c, out);
  if (command == "bands") return run_bands(c, out);
  if (command == "scf") return run_scf(c, out);
  if (command == "junction") return run_junction(c, out);
  if (command == "defect") return run_defect(c, out);
  if (command == "verify") return run_verify(c, out);
  throw ValidationError("unknown command '" + command + "'");
}

}  // namespace qrhf::cli
