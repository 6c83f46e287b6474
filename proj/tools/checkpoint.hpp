#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "qrhf/junction.hpp"

namespace qrhf::cli {

inline constexpr std::uint32_t kSchemaVersion = 1;

// Self-describing binary file: magic, schema version, then named entries (f64 matrices, int64
// scalars, strings) in key order. Doubles are stored as raw little-endian bits.
class Checkpoint {
 public:
  using Value = std::variant<Eigen::MatrixXd, std::int64_t, std::string>;

  std::string kind;  // "ground_state", "junction", ...
  std::map<std::string, Value> entries;

  void put(const std::string& k, double v);
  void put(const std::string& k, std::int64_t v);
  void put(const std::string& k, int v) { put(k, static_cast<std::int64_t>(v)); }
  void put(const std::string& k, bool v) { put(k, static_cast<std::int64_t>(v)); }
  void put(const std::string& k, const std::string& v);
  void put(const std::string& k, const char* v) { put(k, std::string(v)); }
  void put(const std::string& k, Eigen::MatrixXd v);

  bool has(const std::string& k) const { return entries.count(k) > 0; }
  double scalar(const std::string& k) const;
  std::int64_t integer(const std::string& k) const;
  const std::string& text(const std::string& k) const;
  const Eigen::MatrixXd& matrix(const std::string& k) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

struct Provenance {
  std::string config_hash;
  std::string timestamp;  // UTC, ISO 8601
};
Provenance make_provenance(const std::string& config_hash);

void put_field(Checkpoint& c, const std::string& prefix, const ScalarField& f);
ScalarField get_field(const Checkpoint& c, const std::string& prefix);

Checkpoint material_checkpoint(const PeriodicMaterial& m, const Provenance& p);
PeriodicMaterial material_from_checkpoint(const Checkpoint& c);
// Missing file: DependencyError.
PeriodicMaterial load_material(const std::string& path);

struct JunctionRecord {
  std::string left_path, right_path;
  ScalarField v_extra;
  int m_max = -1;
  ReferenceState ref;
};
Checkpoint junction_checkpoint(const JunctionRecord& j, const Provenance& p);
JunctionRecord junction_from_checkpoint(const Checkpoint& c);
JunctionRecord load_junction(const std::string& path);

}  // namespace qrhf::cli
