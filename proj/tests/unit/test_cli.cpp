#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "checkpoint.hpp"
#include "commands.hpp"
#include "doctest.h"
#include "junction_fixture.hpp"
#include "qrhf/errors.hpp"

using namespace qrhf;
using namespace qrhf::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {
std::string scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("qrhf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json small_grid() { return {{"n_x", 16}, {"r_max", 8.0}, {"n_r", 48}, {"m_max", 1}, {"n_xi", 8}}; }

json material(double a) { return {{"Z", 1}, {"a", a}, {"design", {{"contrast", 6.0}, {"width", 0.7}}}}; }

int run_exe(const std::string& args) {
  int status = std::system((std::string(QRHF_EXE) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const std::string& dir, const json& j) {
  std::string path = (fs::path(dir) / "config.json").string();
  std::ofstream(path) << j.dump(2);
  return path;
}

// Every regular file directly under `dir` except binary checkpoints (which carry a timestamp).
std::map<std::string, std::string> text_outputs(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() != ".qrhf") out[e.path().filename().string()] = slurp(e.path());
  return out;
}
}  // namespace

TEST_CASE("config rejects unknown keys and lists all of them") {
  json j = {{"command", "scf"}, {"grid", small_grid()}, {"colour", 1}, {"scf", {{"tol", 1e-8}, {"betta", 0.5}}}};
  try {
    parse_config(j);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("colour") != std::string::npos);
    CHECK(msg.find("scf.betta") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(parse_config({{"scf", {{"tol", -1e-8}}}}), ValidationError);
  CHECK_THROWS_AS(parse_config({{"defect", {{"tol", 0.0}}}}), ValidationError);
  CHECK_THROWS_AS(parse_config({{"greens", {{"fourier_tol", -1.0}}}}), ValidationError);
  CHECK_THROWS_AS(parse_config({{"command", "plot"}}), ValidationError);
  CHECK_THROWS_AS(parse_config({{"verify", {{"chi_b", 7}}}}), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);

  RunConfig c = parse_config({{"junction", {{"left_checkpoint", "a/l.qrhf"}}}}, "/tmp/cfg");
  CHECK(c.resolve(c.junction.left_checkpoint) == "/tmp/cfg/a/l.qrhf");
  CHECK(c.resolve("/abs/x") == "/abs/x");
  CHECK(parse_config({{"seed", 3}}).hash == parse_config({{"seed", 3}}).hash);
  CHECK(parse_config({{"seed", 3}}).hash != parse_config({{"seed", 4}}).hash);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::string dir = scratch("ckpt");
  Checkpoint c;
  c.kind = "test";
  Eigen::MatrixXd m(3, 2);
  m << 0.1, -1e-300, 1.0 / 3.0, std::nextafter(1.0, 2.0), -0.0, 6.02e23;
  c.put("m", m);
  c.put("x", std::acos(-1.0));
  c.put("n", std::int64_t{-42});
  c.put("s", "hello");
  std::string p1 = dir + "/a.qrhf", p2 = dir + "/b.qrhf";
  c.save(p1);
  Checkpoint d = Checkpoint::load(p1);
  CHECK(d.kind == "test");
  CHECK(d.integer("n") == -42);
  CHECK(d.text("s") == "hello");
  CHECK(d.scalar("x") == std::acos(-1.0));
  const Eigen::MatrixXd& dm = d.matrix("m");
  REQUIRE(dm.rows() == 3);
  for (int i = 0; i < m.size(); ++i) CHECK(std::memcmp(&dm.data()[i], &m.data()[i], sizeof(double)) == 0);
  d.save(p2);
  CHECK(slurp(p1) == slurp(p2));
  CHECK_THROWS_AS(d.text("x"), IoError);
  CHECK_THROWS_AS(d.scalar("missing"), IoError);
}

TEST_CASE("checkpoint schema version and missing files") {
  std::string dir = scratch("schema");
  Checkpoint c;
  c.kind = "test";
  c.put("x", 1.0);
  c.save(dir + "/ok.qrhf");
  std::string bytes = slurp(dir + "/ok.qrhf");
  bytes[8] = static_cast<char>(kSchemaVersion + 1);  // first byte of the version after the 8-byte magic
  std::ofstream(dir + "/bad.qrhf", std::ios::binary) << bytes;
  CHECK_THROWS_AS(Checkpoint::load(dir + "/bad.qrhf"), IoError);
  std::ofstream(dir + "/junk.qrhf") << "not a checkpoint";
  CHECK_THROWS_AS(Checkpoint::load(dir + "/junk.qrhf"), IoError);
  CHECK_THROWS_AS(Checkpoint::load(dir + "/absent.qrhf"), DependencyError);
  CHECK_THROWS_AS(load_material(dir + "/absent.qrhf"), DependencyError);
}

TEST_CASE("material checkpoint re-exports identical files") {
  std::string dir = scratch("scf");
  RunConfig c = parse_config({{"command", "scf"}, {"grid", small_grid()}, {"material", material(1.0)}});
  json s = run_scf(c, dir);
  CHECK(s["fermi_level"].get<double>() < 0.0);
  CHECK(s["charge_error"].get<double>() < 1e-8);

  std::string first_line;
  std::getline(std::ifstream(dir + "/bands.csv") >> std::ws, first_line);
  CHECK(first_line == "xi,m,n,lambda");

  PeriodicMaterial m = load_material(dir + "/ground_state.qrhf");
  CHECK((m.state.density.values - fixture::left().state.density.values).cwiseAbs().maxCoeff() == 0.0);
  std::string again = scratch("scf_reexport");
  export_material(m, again);
  for (const char* f : {"bands.csv", "density.csv", "potential.csv"}) CHECK(slurp(dir + "/" + f) == slurp(again + "/" + f));

  Checkpoint a = Checkpoint::load(dir + "/ground_state.qrhf");
  a.save(again + "/copy.qrhf");
  CHECK(slurp(dir + "/ground_state.qrhf") == slurp(again + "/copy.qrhf"));
}

TEST_CASE("reruns with the same config and seed are byte identical") {
  std::string dir = scratch("rerun");
  for (auto [name, a] : {std::pair{"left", 1.0}, std::pair{"right", 1.3}})
    run_scf(parse_config({{"grid", small_grid()}, {"material", material(a)}}), dir + "/" + name);
  RunConfig jc = parse_config({{"junction",
                                {{"left_checkpoint", "left/ground_state.qrhf"},
                                 {"right_checkpoint", "right/ground_state.qrhf"},
                                 {"half_length", 10.4},
                                 {"dx", 1.0 / 16}}}},
                              dir);
  json js = run_junction(jc, dir + "/junction");
  CHECK(js["gap"]["ok"].get<bool>());
  CHECK(js["spectrum"]["stable"].get<bool>());

  json d = {{"seed", 5},
            {"defect",
             {{"junction_checkpoint", "junction/junction.qrhf"}, {"below", 6.0}, {"above", 2.0}, {"start_angle", 0.3}}}};
  RunConfig dc = parse_config(d, dir);
  json s1 = run_defect(dc, dir + "/d1");
  json s2 = run_defect(dc, dir + "/d2");
  CHECK(s1["checks"]["ok"].get<bool>());
  CHECK(s1["kappa_independence"]["max_deviation"].get<double>() < 1e-10);
  auto o1 = text_outputs(dir + "/d1"), o2 = text_outputs(dir + "/d2");
  CHECK(o1.size() == 5);
  CHECK(o1 == o2);

  // the checkpointed reference reproduces the in-memory one
  const fixture::Pair& p = fixture::pair();
  JunctionRecord rec = load_junction(dir + "/junction/junction.qrhf");
  CHECK(rec.ref.fermi_level == p.ref.fermi_level);
  CHECK((rec.ref.density.values - p.ref.density.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unwritable output and missing dependencies") {
  std::string dir = scratch("io");
  std::ofstream(dir + "/file") << "x";
  RunConfig c = parse_config({{"greens", {{"points", 3}}}});
  CHECK_THROWS_AS(run_bands(c, dir + "/file/sub"), IoError);
  RunConfig d = parse_config({{"defect", {{"junction_checkpoint", dir + "/none.qrhf"}}}});
  CHECK_THROWS_AS(run_defect(d, dir + "/out"), DependencyError);
  CHECK_THROWS_AS(run_junction(parse_config(json::object()), dir + "/out"), ValidationError);
}

TEST_CASE("driver exit codes") {
  std::string dir = scratch("exe");
  CHECK(run_exe("--config " + write_config(dir, {{"scf", {{"tol", -1.0}}}}) + " scf") ==
        static_cast<int>(ExitCode::validation));
  CHECK(run_exe("--config " + write_config(dir, {{"bogus", 1}}) + " bands") == static_cast<int>(ExitCode::validation));
  CHECK(run_exe("--config " + write_config(dir, {{"command", "scf"}}) + " bands") ==
        static_cast<int>(ExitCode::validation));
  CHECK(run_exe("--config " + write_config(dir, {{"bands", {{"checkpoint", "gone.qrhf"}}}}) + " bands --out " + dir) ==
        static_cast<int>(ExitCode::dependency));
  CHECK(run_exe("--config " + dir + "/config.json frobnicate") == static_cast<int>(ExitCode::validation));
  CHECK(run_exe("--config " + write_config(dir, {{"grid", small_grid()}}) + " bands --threads 1 --out " + dir) == 0);
  CHECK(fs::exists(dir + "/bands.csv"));
}
