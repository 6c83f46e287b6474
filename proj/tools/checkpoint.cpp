#include "checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "qrhf/errors.hpp"

namespace qrhf::cli {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'Q', 'R', 'H', 'F', 'C', 'K', 'P', 'T'};

template <class T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint " + path + " is truncated");
  return v;
}

std::string read_string(std::ifstream& in, const std::string& path) {
  auto n = read_raw<std::uint64_t>(in, path);
  if (n > (1ull << 32)) throw IoError("checkpoint " + path + " is corrupt");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("checkpoint " + path + " is truncated");
  return s;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_raw<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

Eigen::MatrixXd column(const Eigen::VectorXd& v) { return v; }

Eigen::MatrixXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

void Checkpoint::put(const std::string& k, double v) { entries[k] = Eigen::MatrixXd::Constant(1, 1, v); }
void Checkpoint::put(const std::string& k, std::int64_t v) { entries[k] = v; }
void Checkpoint::put(const std::string& k, const std::string& v) { entries[k] = v; }
void Checkpoint::put(const std::string& k, Eigen::MatrixXd v) { entries[k] = std::move(v); }

namespace {
template <class T>
const T& entry(const Checkpoint& c, const std::string& k, const char* what) {
  auto it = c.entries.find(k);
  if (it == c.entries.end()) throw IoError("checkpoint (" + c.kind + ") has no entry '" + k + "'");
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw IoError("checkpoint entry '" + k + "' is not " + what);
  return *v;
}
}  // namespace

double Checkpoint::scalar(const std::string& k) const {
  const Eigen::MatrixXd& m = entry<Eigen::MatrixXd>(*this, k, "a number");
  if (m.size() != 1) throw IoError("checkpoint entry '" + k + "' is not a scalar");
  return m(0, 0);
}
std::int64_t Checkpoint::integer(const std::string& k) const { return entry<std::int64_t>(*this, k, "an integer"); }
const std::string& Checkpoint::text(const std::string& k) const { return entry<std::string>(*this, k, "a string"); }
const Eigen::MatrixXd& Checkpoint::matrix(const std::string& k) const {
  return entry<Eigen::MatrixXd>(*this, k, "an array");
}

void Checkpoint::save(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  write_raw<std::uint32_t>(out, kSchemaVersion);
  write_string(out, kind);
  write_raw<std::uint64_t>(out, entries.size());
  for (const auto& [name, value] : entries) {
    write_string(out, name);
    if (const auto* m = std::get_if<Eigen::MatrixXd>(&value)) {
      write_raw<char>(out, 'd');
      write_raw<std::uint64_t>(out, m->rows());
      write_raw<std::uint64_t>(out, m->cols());
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    } else if (const auto* i = std::get_if<std::int64_t>(&value)) {
      write_raw<char>(out, 'i');
      write_raw<std::int64_t>(out, *i);
    } else {
      write_raw<char>(out, 's');
      write_string(out, std::get<std::string>(value));
    }
  }
  out.flush();
  if (!out) throw IoError("error writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DependencyError("checkpoint " + path + " does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError(path + " is not a checkpoint");
  auto version = read_raw<std::uint32_t>(in, path);
  if (version != kSchemaVersion)
    throw IoError("checkpoint " + path + " has schema_version " + std::to_string(version) + ", expected " +
                  std::to_string(kSchemaVersion));
  Checkpoint c;
  c.kind = read_string(in, path);
  auto n = read_raw<std::uint64_t>(in, path);
  for (std::uint64_t e = 0; e < n; ++e) {
    std::string name = read_string(in, path);
    char type = read_raw<char>(in, path);
    if (type == 'd') {
      auto rows = read_raw<std::uint64_t>(in, path), cols = read_raw<std::uint64_t>(in, path);
      if (rows > (1ull << 32) || cols > (1ull << 32)) throw IoError("checkpoint " + path + " is corrupt");
      Eigen::MatrixXd m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw IoError("checkpoint " + path + " is truncated");
      c.entries[name] = std::move(m);
    } else if (type == 'i') {
      c.entries[name] = read_raw<std::int64_t>(in, path);
    } else if (type == 's') {
      c.entries[name] = read_string(in, path);
    } else {
      throw IoError("checkpoint " + path + ": unknown entry type");
    }
  }
  return c;
}

Provenance make_provenance(const std::string& config_hash) {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {config_hash, buf};
}

namespace {
void put_provenance(Checkpoint& c, const Provenance& p) {
  c.put("provenance.config_hash", p.config_hash);
  c.put("provenance.timestamp", p.timestamp);
  c.put("schema_version", static_cast<std::int64_t>(kSchemaVersion));
}

void put_cell_grid(Checkpoint& c, const std::string& p, const CellGrid& g) {
  c.put(p + ".period_a", g.period_a);
  c.put(p + ".n_x", g.n_x);
  c.put(p + ".r_max", g.r_max);
  c.put(p + ".n_r", g.n_r);
  c.put(p + ".m_max", g.m_max);
  c.put(p + ".n_xi", g.n_xi);
}

CellGrid get_cell_grid(const Checkpoint& c, const std::string& p) {
  CellGrid g;
  g.period_a = c.scalar(p + ".period_a");
  g.n_x = static_cast<int>(c.integer(p + ".n_x"));
  g.r_max = c.scalar(p + ".r_max");
  g.n_r = static_cast<int>(c.integer(p + ".n_r"));
  g.m_max = static_cast<int>(c.integer(p + ".m_max"));
  g.n_xi = static_cast<int>(c.integer(p + ".n_xi"));
  return g;
}
}  // namespace

void put_field(Checkpoint& c, const std::string& p, const ScalarField& f) {
  c.put(p + ".domain", static_cast<int>(f.domain));
  c.put(p + ".x0", f.x0);
  c.put(p + ".dx", f.dx);
  c.put(p + ".period", f.period);
  c.put(p + ".r_max", f.radial.r_max);
  c.put(p + ".n_r", f.radial.n_r);
  c.put(p + ".values", f.values);
}

ScalarField get_field(const Checkpoint& c, const std::string& p) {
  ScalarField f;
  f.domain = static_cast<Domain>(c.integer(p + ".domain"));
  f.x0 = c.scalar(p + ".x0");
  f.dx = c.scalar(p + ".dx");
  f.period = c.scalar(p + ".period");
  f.radial.r_max = c.scalar(p + ".r_max");
  f.radial.n_r = static_cast<int>(c.integer(p + ".n_r"));
  f.values = c.matrix(p + ".values");
  if (f.values.size() > 0 && f.values.cols() != f.radial.n_r) throw IoError("checkpoint field " + p + " is inconsistent");
  return f;
}

Checkpoint material_checkpoint(const PeriodicMaterial& m, const Provenance& prov) {
  const GroundState& s = m.state;
  Checkpoint c;
  c.kind = "ground_state";
  put_provenance(c, prov);
  put_cell_grid(c, "grid", s.grid);
  c.put("charge_z", s.charge_z);
  c.put("fermi_level", s.fermi_level);
  c.put("homo", s.homo);
  c.put("lumo", s.lumo);
  c.put("fermi.fermi", s.fermi.fermi);
  c.put("fermi.homo", s.fermi.homo);
  c.put("fermi.lumo", s.fermi.lumo);
  c.put("fermi.split", s.fermi.split);
  c.put("fermi.group_energy", s.fermi.group_energy);
  c.put("fermi.group_fraction", s.fermi.group_fraction);
  c.put("fermi.group_tol", s.fermi.group_tol);
  c.put("negative_count", s.negative_count);
  c.put("energy.kinetic", s.energy_kinetic);
  c.put("energy.coulomb", s.energy_coulomb);
  c.put("scf.residual", s.scf_residual);
  c.put("scf.iterations", s.iterations);
  Eigen::MatrixXd hist(s.history.size(), 4);
  for (size_t i = 0; i < s.history.size(); ++i)
    hist.row(i) << s.history[i].iter, s.history[i].residual, s.history[i].fermi, s.history[i].energy;
  c.put("scf.history", hist);
  put_field(c, "density", s.density);
  put_field(c, "potential", s.potential);
  put_field(c, "mu", m.mu);

  const BandStructure& b = s.bands;
  put_cell_grid(c, "bands.grid", b.grid);
  c.put("bands.n_pw", b.n_pw);
  c.put("bands.e_cap", b.e_cap);
  c.put("bands.xis", from_std(b.xis));
  std::vector<double> ch(b.channels.begin(), b.channels.end());
  c.put("bands.channels", from_std(ch));
  c.put("bands.fibers", static_cast<std::int64_t>(b.fibers.size()));
  for (size_t f = 0; f < b.fibers.size(); ++f) {
    const std::string p = "bands.fiber." + std::to_string(f);
    c.put(p + ".k", b.fibers[f].k);
    c.put(p + ".m", b.fibers[f].m);
    c.put(p + ".values", column(b.fibers[f].values));
  }
  Eigen::MatrixXd occ(s.occupations.size(), s.occupations.empty() ? 0 : s.occupations[0].size());
  for (size_t k = 0; k < s.occupations.size(); ++k)
    for (size_t mm = 0; mm < s.occupations[k].size(); ++mm) occ(k, mm) = s.occupations[k][mm];
  c.put("occupations", occ);
  return c;
}

PeriodicMaterial material_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "ground_state") throw IoError("checkpoint holds '" + c.kind + "', expected a ground state");
  PeriodicMaterial m;
  GroundState& s = m.state;
  s.grid = get_cell_grid(c, "grid");
  s.charge_z = static_cast<int>(c.integer("charge_z"));
  s.fermi_level = c.scalar("fermi_level");
  s.homo = c.scalar("homo");
  s.lumo = c.scalar("lumo");
  s.fermi.fermi = c.scalar("fermi.fermi");
  s.fermi.homo = c.scalar("fermi.homo");
  s.fermi.lumo = c.scalar("fermi.lumo");
  s.fermi.split = c.integer("fermi.split") != 0;
  s.fermi.group_energy = c.scalar("fermi.group_energy");
  s.fermi.group_fraction = c.scalar("fermi.group_fraction");
  s.fermi.group_tol = c.scalar("fermi.group_tol");
  s.negative_count = c.scalar("negative_count");
  s.energy_kinetic = c.scalar("energy.kinetic");
  s.energy_coulomb = c.scalar("energy.coulomb");
  s.scf_residual = c.scalar("scf.residual");
  s.iterations = static_cast<int>(c.integer("scf.iterations"));
  const Eigen::MatrixXd& hist = c.matrix("scf.history");
  for (Eigen::Index i = 0; i < hist.rows(); ++i)
    s.history.push_back({static_cast<int>(hist(i, 0)), hist(i, 1), hist(i, 2), hist(i, 3)});
  s.density = get_field(c, "density");
  s.potential = get_field(c, "potential");
  m.mu = get_field(c, "mu");

  BandStructure& b = s.bands;
  b.grid = get_cell_grid(c, "bands.grid");
  b.n_pw = static_cast<int>(c.integer("bands.n_pw"));
  b.e_cap = c.scalar("bands.e_cap");
  const Eigen::MatrixXd& xis = c.matrix("bands.xis");
  b.xis.assign(xis.data(), xis.data() + xis.size());
  const Eigen::MatrixXd& ch = c.matrix("bands.channels");
  for (Eigen::Index i = 0; i < ch.size(); ++i) b.channels.push_back(static_cast<int>(ch(i)));
  const std::int64_t nf = c.integer("bands.fibers");
  for (std::int64_t f = 0; f < nf; ++f) {
    const std::string p = "bands.fiber." + std::to_string(f);
    FiberBands fb;
    fb.k = static_cast<int>(c.integer(p + ".k"));
    fb.m = static_cast<int>(c.integer(p + ".m"));
    fb.values = c.matrix(p + ".values");
    b.fibers.push_back(std::move(fb));
  }
  const Eigen::MatrixXd& occ = c.matrix("occupations");
  s.occupations.assign(occ.rows(), std::vector<int>(occ.cols()));
  for (Eigen::Index k = 0; k < occ.rows(); ++k)
    for (Eigen::Index mm = 0; mm < occ.cols(); ++mm) s.occupations[k][mm] = static_cast<int>(occ(k, mm));
  return m;
}

PeriodicMaterial load_material(const std::string& path) { return material_from_checkpoint(Checkpoint::load(path)); }

Checkpoint junction_checkpoint(const JunctionRecord& j, const Provenance& prov) {
  const ReferenceState& r = j.ref;
  Checkpoint c;
  c.kind = "junction";
  put_provenance(c, prov);
  c.put("left_checkpoint", j.left_path);
  c.put("right_checkpoint", j.right_path);
  c.put("config.m_max", j.m_max);
  c.put("has_v", j.v_extra.n_x() > 0);
  if (j.v_extra.n_x() > 0) put_field(c, "v", j.v_extra);
  c.put("box.half_length", r.grid.half_length);
  c.put("box.n_x", r.grid.n_x);
  c.put("box.r_max", r.grid.r_max);
  c.put("box.n_r", r.grid.n_r);
  c.put("chi.order", r.chi.order);
  c.put("chi.lo", r.chi.lo_frac);
  c.put("chi.hi", r.chi.hi_frac);
  c.put("m_max", r.m_max);
  c.put("gap.sigma_a", r.gap.sigma_a);
  c.put("gap.sigma_b", r.gap.sigma_b);
  c.put("gap.eps_left", r.gap.eps_left);
  c.put("gap.eps_right", r.gap.eps_right);
  c.put("gap.fermi", r.gap.fermi);
  c.put("gap.ok", r.gap.ok);
  c.put("fermi_level", r.fermi_level);
  put_field(c, "potential", r.potential);
  put_field(c, "density", r.density);
  put_field(c, "left_box_density", r.left_box_density);
  put_field(c, "right_box_density", r.right_box_density);
  c.put("occupied_count", r.occupied_count);
  c.put("occupied.channels", static_cast<std::int64_t>(r.occupied.size()));
  for (size_t i = 0; i < r.occupied.size(); ++i) {
    const std::string p = "occupied." + std::to_string(i);
    c.put(p + ".m", r.occupied[i].m);
    c.put(p + ".values", column(r.occupied[i].spectrum.values));
    c.put(p + ".vectors", r.occupied[i].spectrum.vectors);
  }
  c.put("warnings.count", static_cast<std::int64_t>(r.warnings.size()));
  for (size_t i = 0; i < r.warnings.size(); ++i) c.put("warnings." + std::to_string(i), r.warnings[i]);
  return c;
}

JunctionRecord junction_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "junction") throw IoError("checkpoint holds '" + c.kind + "', expected a junction");
  JunctionRecord j;
  j.left_path = c.text("left_checkpoint");
  j.right_path = c.text("right_checkpoint");
  j.m_max = static_cast<int>(c.integer("config.m_max"));
  if (c.integer("has_v")) j.v_extra = get_field(c, "v");
  ReferenceState& r = j.ref;
  r.grid.half_length = c.scalar("box.half_length");
  r.grid.n_x = static_cast<int>(c.integer("box.n_x"));
  r.grid.r_max = c.scalar("box.r_max");
  r.grid.n_r = static_cast<int>(c.integer("box.n_r"));
  r.chi.order = static_cast<int>(c.integer("chi.order"));
  r.chi.lo_frac = c.scalar("chi.lo");
  r.chi.hi_frac = c.scalar("chi.hi");
  r.m_max = static_cast<int>(c.integer("m_max"));
  r.gap.sigma_a = c.scalar("gap.sigma_a");
  r.gap.sigma_b = c.scalar("gap.sigma_b");
  r.gap.eps_left = c.scalar("gap.eps_left");
  r.gap.eps_right = c.scalar("gap.eps_right");
  r.gap.fermi = c.scalar("gap.fermi");
  r.gap.ok = c.integer("gap.ok") != 0;
  r.fermi_level = c.scalar("fermi_level");
  r.potential = get_field(c, "potential");
  r.density = get_field(c, "density");
  r.left_box_density = get_field(c, "left_box_density");
  r.right_box_density = get_field(c, "right_box_density");
  r.occupied_count = c.scalar("occupied_count");
  const std::int64_t n = c.integer("occupied.channels");
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string p = "occupied." + std::to_string(i);
    ChannelStates cs;
    cs.m = static_cast<int>(c.integer(p + ".m"));
    cs.spectrum.values = c.matrix(p + ".values");
    cs.spectrum.vectors = c.matrix(p + ".vectors");
    r.occupied.push_back(std::move(cs));
  }
  const std::int64_t nw = c.integer("warnings.count");
  for (std::int64_t i = 0; i < nw; ++i) r.warnings.push_back(c.text("warnings." + std::to_string(i)));
  return j;
}

JunctionRecord load_junction(const std::string& path) { return junction_from_checkpoint(Checkpoint::load(path)); }

}  // namespace qrhf::cli
