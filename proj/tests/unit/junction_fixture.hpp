#pragma once
// Small insulating pair shared by the junction and defect tests.

#include "qrhf/defect.hpp"

namespace fixture {

inline qrhf::PeriodicMaterial insulator(double a, double contrast = 6.0) {
  qrhf::CellGrid g;
  g.period_a = a;
  g.n_x = 16;
  g.r_max = 8.0;
  g.n_r = 48;
  g.m_max = 1;
  g.n_xi = 8;
  qrhf::NuclearDensity nd;
  nd.period_a = a;
  nd.charge_z = 1;
  qrhf::ScfOptions o;
  o.charge_z = 1;
  return qrhf::designed_material(qrhf::designed_charge(nd, g, contrast, 0.7), g, o);
}

inline const qrhf::PeriodicMaterial& left() {
  static const qrhf::PeriodicMaterial m = insulator(1.0);
  return m;
}
inline const qrhf::PeriodicMaterial& right() {
  static const qrhf::PeriodicMaterial m = insulator(1.3);
  return m;
}

inline qrhf::JunctionConfig junction(const qrhf::PeriodicMaterial& l, const qrhf::PeriodicMaterial& r,
                                     double dx = 1.0 / 16) {
  qrhf::JunctionConfig cfg;
  cfg.left = l;
  cfg.right = r;
  cfg.box = qrhf::SupercellGrid::with_spacing(10.4, dx, l.state.grid.radial());
  return cfg;
}

struct Pair {
  qrhf::JunctionConfig cfg;
  qrhf::ReferenceState ref;
  qrhf::NuChi nu;
};

inline const Pair& pair() {
  static const Pair p = [] {
    Pair q;
    q.cfg = junction(left(), right());
    q.ref = qrhf::reference_density(q.cfg);
    q.nu = qrhf::nu_chi(q.cfg, q.ref);
    return q;
  }();
  return p;
}

}  // namespace fixture
