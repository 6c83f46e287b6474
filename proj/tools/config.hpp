#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrhf/defect.hpp"

namespace qrhf::cli {

// Either an rHF material (nuclear bump) or an engineered insulator built from a designed charge.
struct MaterialConfig {
  NuclearDensity nuclei;
  bool designed = false;
  double contrast = 6.0;
  double width = 0.7;
};

struct GreensConfig {
  int points = 100;
  double r_min = 0.05, r_max = 5.0;
  double tol = 1e-7;
  // grid of the Fourier identity check
  int fourier_n_x = 128;
  double fourier_r_max = 6.0;
  int fourier_n_r = 384;
  double fourier_tol = 0.01;
};

struct BandsConfig {
  std::string checkpoint;  // ground state whose potential is used; empty: V = 0
  double e_cap = 2.0;
  int levels = 4;          // levels per fiber compared with the free oracle
};

struct ScfConfig {
  ScfOptions options;
  InitialGuess initial = InitialGuess::mu_shaped;
  bool summability = false;  // also solve at 1.5 r_max and compare int |r| rho
};

struct JunctionRun {
  std::string left_checkpoint, right_checkpoint;
  double half_length = 12.0;
  double dx = 1.0 / 24;
  ChiProfile chi;
  std::vector<ChiProfile> chi_profiles = standard_chi_profiles();
  int m_max = -1;
  double v_amplitude = 0.0;  // seam charge v = amplitude exp(-(x^2 + r^2) / width^2)
  double v_width = 0.5;
};

struct DefectRun {
  std::string junction_checkpoint;
  DefectWindow window;
  DefectOptions options;
  std::optional<double> kappa;  // default: midgap
  int projected_checks = 0;     // projected-gradient cross-checks (window space)
};

struct VerifyRun {
  int chi_a = 0, chi_b = 2;  // indices into junction.chi_profiles
  int random_starts = 1;
};

struct RunConfig {
  std::string command;
  std::string config_dir;  // relative checkpoint paths resolve against it
  std::string output = "out";
  unsigned seed = 1;
  int threads = 0;
  CellGrid grid;
  MaterialConfig material, left, right;
  GreensConfig greens;
  BandsConfig bands;
  ScfConfig scf;
  JunctionRun junction;
  DefectRun defect;
  VerifyRun verify;
  std::string hash;  // FNV-1a of the canonical config text

  std::string resolve(const std::string& path) const;
};

// Strict parse: unknown keys anywhere are collected and reported in one ValidationError.
RunConfig parse_config(const nlohmann::json& j, const std::string& config_dir = ".");
RunConfig load_config(const std::string& path);

std::string fnv1a_hex(const std::string& s);

}  // namespace qrhf::cli
