#include "qrhf/junction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qrhf/errors.hpp"
#include "qrhf/parallel.hpp"

namespace qrhf {

namespace {
constexpr double pi = std::numbers::pi;

double channel_weight(int m) { return m == 0 ? 1.0 : 2.0; }

ScalarField sample_on_box(const ScalarField& cell, const SupercellGrid& box, int derivative = 0) {
  return PeriodicInterpolant(cell).sample(box, derivative);
}

double window_mass(const ScalarField& f, int i) {
  double s = 0.0;
  for (int j = 0; j < f.n_r(); ++j) s += std::abs(f(i, j)) * f.cell_weight(j);
  return s;
}

struct LineFit {
  double slope = 0.0, r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const int n = static_cast<int>(x.size());
  if (n < 3) return f;
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

// Fraction of |v|^2 on nodes selected by `pick(x)`.
template <class Pick>
double mass_fraction(const Eigen::VectorXd& v, const SupercellGrid& g, Pick pick) {
  double in = 0.0, all = 0.0;
  for (int i = 0; i < g.n_x; ++i) {
    double s = v.segment(static_cast<Eigen::Index>(i) * g.n_r, g.n_r).squaredNorm();
    all += s;
    if (pick(g.x(i))) in += s;
  }
  return all > 0 ? in / all : 0.0;
}

double distance_to_bands(double lambda, int m, const std::vector<BandInterval>& bands) {
  double d = std::numeric_limits<double>::infinity();
  for (const BandInterval& b : bands) {
    if (b.m != m) continue;
    if (lambda >= b.lo && lambda <= b.hi) return 0.0;
    d = std::min(d, lambda < b.lo ? b.lo - lambda : lambda - b.hi);
  }
  return d;
}

// Eigenpairs of every channel with eigenvalue below `upper`.
std::vector<ChannelStates> channel_states(const ScalarField& V, const SupercellGrid& box, int m_max, double upper) {
  std::vector<ChannelStates> out(m_max + 1);
  parallel_for(m_max + 1, [&](int m) {
    SupercellOperator H = assemble_supercell(V, m, box);
    out[m].m = m;
    if (upper <= H.v_min) {
      out[m].spectrum.values.resize(0);
      out[m].spectrum.vectors.resize(H.dim(), 0);
      return;
    }
    out[m].spectrum = supercell_eigenpairs(H, H.v_min - 1.0, upper);
  });
  return out;
}
}  // namespace

int JunctionConfig::channels() const {
  return m_max >= 0 ? m_max : std::min(left.state.grid.m_max, right.state.grid.m_max);
}

double JunctionConfig::a_max() const { return std::max(left.state.grid.period_a, right.state.grid.period_a); }

void JunctionConfig::validate() const {
  box.validate();
  chi.validate();
  for (const PeriodicMaterial* p : {&left, &right}) {
    if (!(p->state.grid.radial() == box.radial()))
      throw ValidationError("junction: material radial grid differs from the box radial grid");
    if (p->mu.n_x() != p->state.grid.n_x || p->mu.n_r() != p->state.grid.n_r)
      throw ValidationError("junction: nuclear density is not on the material grid");
    if (!(p->state.fermi_level < 0.0)) {
      std::ostringstream os;
      os << "junction: Fermi level " << p->state.fermi_level << " of the " << (p == &left ? "left" : "right")
         << " material is not negative";
      throw ValidationError(os.str());
    }
  }
  if (box.half_length < 8.0 * a_max()) throw ValidationError("junction: box half length must be >= 8 max(a_L, a_R)");
  if (channels() > std::min(left.state.grid.m_max, right.state.grid.m_max))
    throw ValidationError("junction: more channels than the materials resolve");
  if (v_extra.n_x() > 0) {
    if (!v_extra.same_grid(ScalarField::on(box))) throw ValidationError("junction: v_extra is not on the box grid");
    if (!boundary_report(v_extra, 1e-12).decayed) throw ValidationError("junction: v_extra touches the box edges");
  }
}

std::vector<BandInterval> band_intervals(const GroundState& st, double below) {
  std::vector<BandInterval> out;
  const BandStructure& b = st.bands;
  for (int m = 0; m <= st.grid.m_max; ++m)
    for (int n = 0;; ++n) {
      BandInterval bi{m, n, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
      int present = 0;
      for (int k = 0; k < st.grid.n_xi; ++k) {
        const Eigen::VectorXd& v = b.values(k, m);
        if (n >= v.size()) {
          bi.hi = std::max(bi.hi, b.e_cap);  // continues above the stored window
          continue;
        }
        ++present;
        bi.lo = std::min(bi.lo, v(n));
        bi.hi = std::max(bi.hi, v(n));
        bi.filled += st.fermi.occupation(v(n)) > 0.0 ? 1.0 : 0.0;
      }
      if (present == 0 || bi.lo >= below) break;
      bi.filled /= st.grid.n_xi;
      out.push_back(bi);
    }
  return out;
}

GapReport gap_check(const GroundState& left, const GroundState& right) {
  GapReport g;
  g.eps_left = left.fermi_level;
  g.eps_right = right.fermi_level;
  g.fermi = std::max(g.eps_left, g.eps_right);
  g.sigma_a = -std::numeric_limits<double>::infinity();
  g.sigma_b = 0.0;
  for (const GroundState* s : {&left, &right})
    for (const BandInterval& b : band_intervals(*s, std::numeric_limits<double>::infinity())) {
      if (b.filled > 0.0) g.sigma_a = std::max(g.sigma_a, b.hi);
      if (b.filled < 1.0) g.sigma_b = std::min(g.sigma_b, b.lo);
    }
  g.ok = g.sigma_a < std::min(g.eps_left, g.eps_right) && g.fermi < g.sigma_b;
  return g;
}

std::vector<ChiValue> chi_on_box(const JunctionConfig& cfg, const ChiProfile& chi) {
  std::vector<ChiValue> c(cfg.box.n_x);
  const double aL = cfg.left.state.grid.period_a, aR = cfg.right.state.grid.period_a;
  for (int i = 0; i < cfg.box.n_x; ++i) c[i] = cutoff_chi_full(cfg.box.x(i), aL, aR, chi);
  return c;
}

ScalarField reference_potential(const JunctionConfig& cfg) { return reference_potential(cfg, cfg.chi); }

ScalarField reference_potential(const JunctionConfig& cfg, const ChiProfile& chi) {
  ScalarField VL = sample_on_box(cfg.left.state.potential, cfg.box);
  ScalarField VR = sample_on_box(cfg.right.state.potential, cfg.box);
  std::vector<ChiValue> c = chi_on_box(cfg, chi);
  ScalarField V = ScalarField::on(cfg.box);
  for (int i = 0; i < cfg.box.n_x; ++i) {
    double w = c[i].value * c[i].value;
    if (w == 1.0)
      V.values.row(i) = VL.values.row(i);
    else if (w == 0.0)
      V.values.row(i) = VR.values.row(i);
    else
      V.values.row(i) = w * VL.values.row(i) + (1.0 - w) * VR.values.row(i);
  }
  return V;
}

BoxProjector box_projector(const ScalarField& V, const SupercellGrid& box, int m_max, double fermi,
                           double boundary_tol) {
  BoxProjector out;
  std::vector<ChannelStates> all = channel_states(V, box, m_max, fermi + boundary_tol);
  out.density = ScalarField::on(box);
  for (ChannelStates& cs : all) {
    std::vector<int> keep;
    for (int c = 0; c < cs.spectrum.values.size(); ++c) {
      double l = cs.spectrum.values(c);
      if (std::abs(l - fermi) <= boundary_tol) {
        std::ostringstream os;
        os << "channel " << cs.m << ": eigenvalue " << l << " within " << boundary_tol
           << " of the Fermi level, excluded from the projector";
        out.warnings.push_back(os.str());
        continue;
      }
      if (l < fermi) keep.push_back(c);
    }
    ChannelStates occ;
    occ.m = cs.m;
    occ.spectrum.values.resize(keep.size());
    occ.spectrum.vectors.resize(cs.spectrum.vectors.rows(), keep.size());
    for (size_t c = 0; c < keep.size(); ++c) {
      occ.spectrum.values(c) = cs.spectrum.values(keep[c]);
      occ.spectrum.vectors.col(c) = cs.spectrum.vectors.col(keep[c]);
    }
    const double w = channel_weight(cs.m);
    const int nr = box.n_r;
    for (int c = 0; c < occ.spectrum.values.size(); ++c) {
      Eigen::Map<const Eigen::MatrixXd> u(occ.spectrum.vectors.col(c).data(), nr, box.n_x);
      out.density.values.noalias() += w * u.cwiseAbs2().transpose();
    }
    out.count += w * occ.spectrum.values.size();
    out.occupied.push_back(std::move(occ));
  }
  // coefficient vectors carry sqrt(dx w_j)
  for (int j = 0; j < box.n_r; ++j) out.density.values.col(j) /= box.dx() * box.radial().weight(j);
  return out;
}

ReferenceState reference_density(const JunctionConfig& cfg) { return reference_density(cfg, cfg.chi); }

ReferenceState reference_density(const JunctionConfig& cfg, const ChiProfile& chi) {
  cfg.validate();
  chi.validate();
  ReferenceState ref;
  ref.grid = cfg.box;
  ref.chi = chi;
  ref.m_max = cfg.channels();
  ref.gap = gap_check(cfg.left.state, cfg.right.state);
  if (!ref.gap.ok) {
    std::ostringstream os;
    os << "junction: Fermi levels (" << ref.gap.eps_left << ", " << ref.gap.eps_right
       << ") do not lie in a common gap (" << ref.gap.sigma_a << ", " << ref.gap.sigma_b << ")";
    throw ValidationError(os.str());
  }
  ref.fermi_level = ref.gap.fermi;
  ref.potential = reference_potential(cfg, chi);
  BoxProjector p = box_projector(ref.potential, cfg.box, ref.m_max, ref.fermi_level);
  ref.density = std::move(p.density);
  ref.occupied = std::move(p.occupied);
  ref.occupied_count = p.count;
  ref.warnings = std::move(p.warnings);
  ref.left_box_density =
      box_projector(sample_on_box(cfg.left.state.potential, cfg.box), cfg.box, ref.m_max, ref.fermi_level).density;
  ref.right_box_density =
      box_projector(sample_on_box(cfg.right.state.potential, cfg.box), cfg.box, ref.m_max, ref.fermi_level).density;
  return ref;
}

ScalarField density_defect(const JunctionConfig& cfg, const ReferenceState& ref) {
  std::vector<ChiValue> c = chi_on_box(cfg, ref.chi);
  ScalarField d = ScalarField::on(cfg.box);
  for (int i = 0; i < cfg.box.n_x; ++i) {
    double w = c[i].value * c[i].value;
    d.values.row(i) = w * ref.left_box_density.values.row(i) + (1.0 - w) * ref.right_box_density.values.row(i) -
                      ref.density.values.row(i);
  }
  return d;
}

DefectDecay density_defect_decay(const JunctionConfig& cfg, const ReferenceState& ref) {
  ScalarField d = density_defect(cfg, ref);
  const SupercellGrid& g = cfg.box;
  const double L = g.half_length, a = cfg.a_max();
  DefectDecay out;
  const int n_win = static_cast<int>(std::floor(L + 1e-12));
  // windows ordered left to right: (-n_win, -n_win + 1], ..., (-1, 0], [0, 1), ..., [n_win - 1, n_win)
  for (int k = -n_win; k < n_win; ++k) {
    double lo = k, hi = k + 1.0, m = 0.0;
    for (int i = 0; i < g.n_x; ++i) {
      double x = g.x(i);
      bool in = k < 0 ? (x > lo && x <= hi) : (x >= lo && x < hi);
      if (in) m += window_mass(d, i);
    }
    out.window_lo.push_back(lo);
    out.window_hi.push_back(hi);
    out.mass.push_back(m);
    if (std::max(std::abs(lo), std::abs(hi)) <= L - 2.0 * a) out.interior_max = std::max(out.interior_max, m);
  }
  out.fit_inner = 2.0 * a;
  out.fit_outer = L - 2.0 * a;
  const double peak = *std::max_element(out.mass.begin(), out.mass.end());
  auto side = [&](int sign, double& rate, double& r2) {
    std::vector<double> xs, ys;
    for (int w = 0; w < static_cast<int>(out.mass.size()); ++w) {
      double lo = sign > 0 ? out.window_lo[w] : -out.window_hi[w];
      double hi = sign > 0 ? out.window_hi[w] : -out.window_lo[w];
      if (lo < out.fit_inner - 1e-12 || hi > out.fit_outer + 1e-12) continue;
      xs.push_back(0.5 * (lo + hi));
      ys.push_back(out.mass[w]);
    }
    std::vector<int> order(xs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int p, int q) { return xs[p] < xs[q]; });
    std::vector<double> fx, fy;
    for (int i : order) {
      // round-off floor reached: stop the window here
      if (!(ys[i] > 1e-14 * peak) || ys[i] <= 1e-300) {
        out.window_shrunk = true;
        break;
      }
      fx.push_back(xs[i]);
      fy.push_back(std::log(ys[i]));
    }
    LineFit f = fit_line(fx, fy);
    rate = -f.slope;
    r2 = f.r2;
    out.points += static_cast<int>(fx.size());
  };
  side(-1, out.rate_left, out.r2_left);
  side(+1, out.rate_right, out.r2_right);
  out.rate = std::min(out.rate_left, out.rate_right);
  out.r2 = std::min(out.r2_left, out.r2_right);
  return out;
}

ScalarField eta_chi(const JunctionConfig& cfg) { return eta_chi(cfg, cfg.chi); }

ScalarField eta_chi(const JunctionConfig& cfg, const ChiProfile& chi) {
  const ScalarField &VL = cfg.left.state.potential, &VR = cfg.right.state.potential;
  ScalarField d0 = sample_on_box(VL, cfg.box, 0) - sample_on_box(VR, cfg.box, 0);
  ScalarField d1 = sample_on_box(VL, cfg.box, 1) - sample_on_box(VR, cfg.box, 1);
  std::vector<ChiValue> c = chi_on_box(cfg, chi);
  ScalarField eta = ScalarField::on(cfg.box);
  for (int i = 0; i < cfg.box.n_x; ++i) {
    // (chi^2)' and (chi^2)''
    double c1 = 2.0 * c[i].value * c[i].d1;
    double c2 = 2.0 * c[i].d1 * c[i].d1 + 2.0 * c[i].value * c[i].d2;
    if (c1 == 0.0 && c2 == 0.0) continue;
    eta.values.row(i) = -(c2 * d0.values.row(i) + 2.0 * c1 * d1.values.row(i)) / (4.0 * pi);
  }
  return eta;
}

double poisson_consistency(const JunctionConfig& cfg, const ChiProfile& chi) {
  const SupercellGrid& g = cfg.box;
  ScalarField V = reference_potential(cfg, chi);
  ScalarField qL = sample_on_box(cfg.left.state.density - cfg.left.mu, g);
  ScalarField qR = sample_on_box(cfg.right.state.density - cfg.right.mu, g);
  ScalarField eta = eta_chi(cfg, chi);
  std::vector<ChiValue> c = chi_on_box(cfg, chi);
  RadialOperator A = radial_laplacian(g.radial(), 0);
  const int nr = g.n_r;
  const double dx = g.dx(), margin = 2.0 * cfg.a_max();
  Eigen::VectorXd sw(nr);
  for (int j = 0; j < nr; ++j) sw(j) = std::sqrt(g.radial().weight(j));
  double res2 = 0.0, ref2 = 0.0;
  for (int i = 1; i + 1 < g.n_x; ++i) {
    if (!interior_node(g, i, margin)) continue;
    Eigen::VectorXd s = V.values.row(i).transpose().cwiseProduct(sw);
    Eigen::VectorXd As = A.diag.cwiseProduct(s);
    As.head(nr - 1) += A.off.cwiseProduct(s.tail(nr - 1));
    As.tail(nr - 1) += A.off.cwiseProduct(s.head(nr - 1));
    double w = c[i].value * c[i].value;
    for (int j = 0; j < nr; ++j) {
      if (g.radial().node(j) > g.r_max - 1.0) break;
      double lap = -(V(i + 1, j) - 2.0 * V(i, j) + V(i - 1, j)) / (dx * dx) + As(j) / sw(j);
      double rhs = w * qL(i, j) + (1.0 - w) * qR(i, j) + eta(i, j);
      double cw = dx * g.radial().weight(j);
      res2 += std::pow(lap / (4.0 * pi) - rhs, 2) * cw;
      ref2 += rhs * rhs * cw;
    }
  }
  return std::sqrt(res2 / std::max(ref2, 1e-300));
}

NuChi nu_chi(const JunctionConfig& cfg, const ReferenceState& ref, double boundary_tol) {
  const SupercellGrid& g = cfg.box;
  ScalarField muL = sample_on_box(cfg.left.mu, g), muR = sample_on_box(cfg.right.mu, g);
  std::vector<ChiValue> c = chi_on_box(cfg, ref.chi);
  NuChi out;
  out.nu = density_defect(cfg, ref);
  out.nu += eta_chi(cfg, ref.chi);
  for (int i = 0; i < g.n_x; ++i) {
    double s = (g.x(i) <= 0.0 ? 1.0 : 0.0) - c[i].value * c[i].value;
    if (s != 0.0) out.nu.values.row(i) += s * (muL.values.row(i) - muR.values.row(i));
  }
  if (cfg.v_extra.n_x() > 0) out.nu += cfg.v_extra;
  out.charge = out.nu.integral();
  out.boundary = boundary_report(out.nu, boundary_tol);
  if (!out.boundary.decayed) {
    std::ostringstream os;
    os << "nu_chi: box too small, edge mass " << out.boundary.boundary_mass << " of " << out.boundary.total_mass;
    throw ValidationError(os.str());
  }
  out.self_energy = coulomb_energy_free(out.nu, out.nu);
  return out;
}

std::vector<ChiProfile> standard_chi_profiles() { return {ChiProfile{2, 0.0, 1.0}, ChiProfile{3, 0.0, 1.0}, ChiProfile{2, 0.2, 0.7}}; }

bool interior_node(const SupercellGrid& g, int i, double margin) {
  double x = g.x(i);
  return x >= -g.half_length + margin && x <= g.half_length - margin;
}

double interior_l2(const ScalarField& f, double margin) {
  SupercellGrid g;
  g.half_length = -f.x0 + f.dx;  // x_0 = -L + dx
  g.n_x = f.n_x();
  g.r_max = f.radial.r_max;
  g.n_r = f.n_r();
  double s = 0.0;
  for (int i = 0; i < f.n_x(); ++i) {
    if (!interior_node(g, i, margin)) continue;
    for (int j = 0; j < f.n_r(); ++j) s += f(i, j) * f(i, j) * f.cell_weight(j);
  }
  return std::sqrt(s);
}

SpectrumUnionReport spectrum_union_check(const JunctionConfig& cfg, const std::vector<ChiProfile>& chis) {
  cfg.validate();
  const SupercellGrid& g = cfg.box;
  const int M = cfg.channels();
  const double a = cfg.a_max(), L = g.half_length;
  auto seam = [&](double x) { return std::abs(x) < 4.0 * a; };
  auto wall = [&](double x) { return std::abs(x) > L - 2.0 * a; };
  const double top = -1e-12;  // spectrum strictly below 0

  std::vector<BandInterval> bl = band_intervals(cfg.left.state), br = band_intervals(cfg.right.state);
  std::vector<BandInterval> both = bl;
  both.insert(both.end(), br.begin(), br.end());

  SpectrumUnionReport rep;
  struct WallLevel {
    int m;
    double lambda;
    double spread;  // half splitting when the state is shared by both walls
  };
  std::vector<WallLevel> wall_levels;
  auto calibrate = [&](const ScalarField& cellV, const std::vector<BandInterval>& own) {
    double worst = 0.0;
    std::vector<WallLevel> mine;
    std::vector<bool> shared;
    for (const ChannelStates& cs : channel_states(sample_on_box(cellV, g), g, M, top))
      for (int c = 0; c < cs.spectrum.values.size(); ++c) {
        const auto& v = cs.spectrum.vectors.col(c);
        if (mass_fraction(v, g, wall) >= 0.5) {
          double fl = mass_fraction(v, g, [&](double x) { return x < -L + 2.0 * a; });
          double fr = mass_fraction(v, g, [&](double x) { return x > L - 2.0 * a; });
          mine.push_back({cs.m, cs.spectrum.values(c), 0.0});
          shared.push_back(std::min(fl, fr) > 0.1);
          continue;
        }
        worst = std::max(worst, distance_to_bands(cs.spectrum.values(c), cs.m, own));
      }
    // the two walls of a pure box carry tunnel-split copies of one wall level; a junction has one copy
    for (size_t i = 0; i < mine.size(); ++i) {
      if (!shared[i]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < mine.size(); ++k)
        if (k != i && shared[k] && mine[k].m == mine[i].m)
          nearest = std::min(nearest, std::abs(mine[k].lambda - mine[i].lambda));
      if (std::isfinite(nearest)) mine[i].spread = 0.5 * nearest;
    }
    wall_levels.insert(wall_levels.end(), mine.begin(), mine.end());
    return worst;
  };
  rep.pure_discrepancy_left = calibrate(cfg.left.state.potential, bl);
  rep.pure_discrepancy_right = calibrate(cfg.right.state.potential, br);
  rep.delta_band = 3.0 * std::max({rep.pure_discrepancy_left, rep.pure_discrepancy_right, 1e-9});

  for (const ChiProfile& chi : chis) {
    SpectrumClassification cl;
    cl.chi = chi;
    for (const ChannelStates& cs : channel_states(reference_potential(cfg, chi), g, M, top))
      for (int c = 0; c < cs.spectrum.values.size(); ++c) {
        SpectrumEntry e;
        e.m = cs.m;
        e.lambda = cs.spectrum.values(c);
        e.in_bands = distance_to_bands(e.lambda, e.m, both) <= rep.delta_band;
        e.seam_fraction = mass_fraction(cs.spectrum.vectors.col(c), g, seam);
        e.wall_fraction = mass_fraction(cs.spectrum.vectors.col(c), g, wall);
        if (!e.in_bands && e.wall_fraction >= 0.5)
          for (const WallLevel& w : wall_levels)
            if (w.m == e.m && std::abs(w.lambda - e.lambda) <= rep.delta_band + w.spread) e.wall_state = true;
        if (e.in_bands)
          ++cl.band_states;
        else if (e.wall_state)
          ++cl.wall_gap_states;
        else {
          ++cl.gap_states;
          if (e.seam_fraction >= 0.9)
            ++cl.seam_gap_states;
          else
            ++cl.other_gap_states;
        }
        cl.entries.push_back(e);
      }
    rep.per_chi.push_back(std::move(cl));
  }

  auto signature = [&](const SpectrumClassification& cl) {
    std::vector<int> s(2 * (M + 1), 0);
    for (const SpectrumEntry& e : cl.entries) {
      if (e.wall_state) continue;
      ++s[2 * e.m + (e.in_bands ? 0 : 1)];
    }
    return s;
  };
  rep.stable = true;
  rep.gap_states_localized = true;
  for (const SpectrumClassification& cl : rep.per_chi) {
    if (signature(cl) != signature(rep.per_chi.front())) rep.stable = false;
    if (cl.other_gap_states > 0) rep.gap_states_localized = false;
  }
  return rep;
}

}  // namespace qrhf
