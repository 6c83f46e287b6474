#pragma once

#include <string>

#include "config.hpp"
#include "json.hpp"

namespace qrhf::cli {

// Each command writes its artifacts into `out` and returns the JSON summary it wrote.
nlohmann::json run_greens(const RunConfig& c, const std::string& out);
nlohmann::json run_bands(const RunConfig& c, const std::string& out);
nlohmann::json run_scf(const RunConfig& c, const std::string& out);
nlohmann::json run_junction(const RunConfig& c, const std::string& out);
nlohmann::json run_defect(const RunConfig& c, const std::string& out);
nlohmann::json run_verify(const RunConfig& c, const std::string& out);

nlohmann::json run_command(const std::string& command, const RunConfig& c, const std::string& out);

// Material from a config block on the shared grid (period taken from the block).
PeriodicMaterial build_material(const MaterialConfig& m, const CellGrid& grid, const ScfConfig& scf);

// bands.csv, density.csv and potential.csv; a material loaded from its checkpoint re-exports identical files.
void export_material(const PeriodicMaterial& m, const std::string& out);

}  // namespace qrhf::cli
