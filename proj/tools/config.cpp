#include "config.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "qrhf/errors.hpp"

namespace qrhf::cli {

using nlohmann::json;

namespace {

class Block {
 public:
  Block(const json* j, std::string path, std::vector<std::string>* unknown)
      : j_(j), path_(std::move(path)), unknown_(unknown) {
    if (j_ && !j_->is_object()) throw ValidationError("config: " + path_ + " must be an object");
  }
  ~Block() {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!used_.count(it.key())) unknown_->push_back(where(it.key()));
  }
  Block(const Block&) = delete;

  bool has(const std::string& k) const { return j_ && j_->contains(k); }

  template <class T>
  void read(const std::string& k, T& out) {
    used_.insert(k);
    if (!has(k)) return;
    try {
      out = j_->at(k).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + where(k) + " has the wrong type");
    }
  }

  Block sub(const std::string& k) {
    used_.insert(k);
    return Block(has(k) ? &j_->at(k) : nullptr, where(k), unknown_);
  }

  Block element(const json* e, const std::string& name) const { return Block(e, where(name), unknown_); }

  const json* raw(const std::string& k) {
    used_.insert(k);
    return has(k) ? &j_->at(k) : nullptr;
  }

  std::string where(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

 private:
  const json* j_;
  std::string path_;
  std::vector<std::string>* unknown_;
  std::set<std::string> used_;
};

void positive(double v, const std::string& name) {
  if (!(v > 0.0)) throw ValidationError("config: " + name + " must be > 0");
}

void read_grid(Block b, CellGrid& g) {
  b.read("n_x", g.n_x);
  b.read("r_max", g.r_max);
  b.read("n_r", g.n_r);
  b.read("m_max", g.m_max);
  b.read("n_xi", g.n_xi);
}

void read_material(Block b, MaterialConfig& m) {
  b.read("Z", m.nuclei.charge_z);
  b.read("a", m.nuclei.period_a);
  b.read("bump_center_r", m.nuclei.bump_center_r);
  b.read("bump_width", m.nuclei.bump_width);
  b.read("support_radius", m.nuclei.support_radius);
  if (b.has("design")) {
    Block d = b.sub("design");
    m.designed = true;
    d.read("contrast", m.contrast);
    d.read("width", m.width);
    positive(m.width, b.where("design.width"));
  }
  m.nuclei.validate();
}

ChiProfile read_chi(Block b) {
  ChiProfile c;
  b.read("order", c.order);
  b.read("lo", c.lo_frac);
  b.read("hi", c.hi_frac);
  c.validate();
  return c;
}

void read_scf(Block b, ScfConfig& s) {
  ScfOptions& o = s.options;
  b.read("beta", o.mix_beta);
  b.read("tol", o.tol);
  b.read("max_iter", o.max_iter);
  b.read("anderson_depth", o.anderson_depth);
  b.read("e_cap", o.e_cap);
  std::string policy = "strict", init = "mu_shaped";
  b.read("fermi_policy", policy);
  b.read("initial", init);
  b.read("summability", s.summability);
  positive(o.tol, "scf.tol");
  if (!(o.mix_beta > 0.0 && o.mix_beta <= 1.0)) throw ValidationError("config: scf.beta must lie in (0, 1]");
  if (o.max_iter < 1) throw ValidationError("config: scf.max_iter must be >= 1");
  if (o.anderson_depth < 0) throw ValidationError("config: scf.anderson_depth must be >= 0");
  if (policy == "strict")
    o.fermi_policy = FermiPolicy::strict;
  else if (policy == "aufbau")
    o.fermi_policy = FermiPolicy::aufbau;
  else
    throw ValidationError("config: scf.fermi_policy must be strict or aufbau");
  if (init == "mu_shaped")
    s.initial = InitialGuess::mu_shaped;
  else if (init == "uniform")
    s.initial = InitialGuess::uniform;
  else
    throw ValidationError("config: scf.initial must be mu_shaped or uniform");
}

void read_greens(Block b, GreensConfig& g) {
  b.read("points", g.points);
  b.read("r_min", g.r_min);
  b.read("r_max", g.r_max);
  b.read("tol", g.tol);
  b.read("fourier_n_x", g.fourier_n_x);
  b.read("fourier_r_max", g.fourier_r_max);
  b.read("fourier_n_r", g.fourier_n_r);
  b.read("fourier_tol", g.fourier_tol);
  if (g.points < 1) throw ValidationError("config: greens.points must be >= 1");
  positive(g.r_min, "greens.r_min");
  if (!(g.r_max > g.r_min)) throw ValidationError("config: greens.r_max must exceed greens.r_min");
  positive(g.tol, "greens.tol");
  positive(g.fourier_tol, "greens.fourier_tol");
}

void read_bands(Block b, BandsConfig& c) {
  b.read("checkpoint", c.checkpoint);
  b.read("e_cap", c.e_cap);
  b.read("levels", c.levels);
  if (c.levels < 1) throw ValidationError("config: bands.levels must be >= 1");
}

void read_junction(Block b, JunctionRun& r) {
  b.read("left_checkpoint", r.left_checkpoint);
  b.read("right_checkpoint", r.right_checkpoint);
  b.read("half_length", r.half_length);
  b.read("dx", r.dx);
  b.read("m_max", r.m_max);
  positive(r.half_length, "junction.half_length");
  positive(r.dx, "junction.dx");
  if (b.has("chi")) r.chi = read_chi(b.sub("chi"));
  if (const json* list = b.raw("chi_profiles")) {
    if (!list->is_array() || list->empty()) throw ValidationError("config: junction.chi_profiles must be a non-empty list");
    r.chi_profiles.clear();
    for (size_t i = 0; i < list->size(); ++i)
      r.chi_profiles.push_back(read_chi(b.element(&(*list)[i], "chi_profiles[" + std::to_string(i) + "]")));
  }
  Block v = b.sub("v");
  v.read("amplitude", r.v_amplitude);
  v.read("width", r.v_width);
  positive(r.v_width, "junction.v.width");
}

void read_defect(Block b, DefectRun& d) {
  b.read("junction_checkpoint", d.junction_checkpoint);
  std::string space = "window";
  b.read("space", space);
  if (space == "window")
    d.window.space = DefectSpace::window;
  else if (space == "full")
    d.window.space = DefectSpace::full;
  else
    throw ValidationError("config: defect.space must be window or full");
  b.read("below", d.window.below);
  b.read("above", d.window.above);
  positive(d.window.below, "defect.below");
  positive(d.window.above, "defect.above");
  DefectOptions& o = d.options;
  b.read("mix", o.mix);
  b.read("tol", o.tol);
  b.read("max_iter", o.max_iter);
  b.read("anderson_depth", o.anderson_depth);
  b.read("degeneracy_tol", o.degeneracy_tol);
  b.read("start_angle", o.start_angle);
  b.read("projected_checks", d.projected_checks);
  if (b.has("kappa")) {
    double k = 0.0;
    b.read("kappa", k);
    d.kappa = k;
  }
  positive(o.tol, "defect.tol");
  positive(o.degeneracy_tol, "defect.degeneracy_tol");
  o.validate();
  if (d.projected_checks < 0) throw ValidationError("config: defect.projected_checks must be >= 0");
}

void read_verify(Block b, VerifyRun& v) {
  b.read("chi_a", v.chi_a);
  b.read("chi_b", v.chi_b);
  b.read("random_starts", v.random_starts);
  if (v.random_starts < 0) throw ValidationError("config: verify.random_starts must be >= 0");
}

}  // namespace

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || config_dir.empty()) return p.string();
  return (std::filesystem::path(config_dir) / p).lexically_normal().string();
}

RunConfig parse_config(const json& j, const std::string& config_dir) {
  RunConfig c;
  c.config_dir = config_dir;
  std::vector<std::string> unknown;
  {
    Block root(&j, "", &unknown);
    root.read("command", c.command);
    root.read("output", c.output);
    root.read("seed", c.seed);
    root.read("threads", c.threads);
    read_grid(root.sub("grid"), c.grid);
    read_material(root.sub("material"), c.material);
    read_material(root.sub("left"), c.left);
    read_material(root.sub("right"), c.right);
    read_greens(root.sub("greens"), c.greens);
    read_bands(root.sub("bands"), c.bands);
    read_scf(root.sub("scf"), c.scf);
    read_junction(root.sub("junction"), c.junction);
    read_defect(root.sub("defect"), c.defect);
    read_verify(root.sub("verify"), c.verify);
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const std::string& u : unknown) msg += " " + u;
    throw ValidationError(msg);
  }
  static const std::set<std::string> commands = {"", "greens", "bands", "scf", "junction", "defect", "verify"};
  if (!commands.count(c.command)) throw ValidationError("config: unknown command '" + c.command + "'");
  if (c.threads < 0) throw ValidationError("config: threads must be >= 0");
  c.grid.period_a = c.material.nuclei.period_a;
  c.grid.validate();
  const int nchi = static_cast<int>(c.junction.chi_profiles.size());
  if (c.verify.chi_a < 0 || c.verify.chi_a >= nchi || c.verify.chi_b < 0 || c.verify.chi_b >= nchi)
    throw ValidationError("config: verify.chi_a / chi_b must index junction.chi_profiles");
  c.hash = fnv1a_hex(j.dump());
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  return parse_config(j, dir.empty() ? "." : dir.string());
}

}  // namespace qrhf::cli
