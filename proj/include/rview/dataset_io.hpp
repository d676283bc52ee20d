#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rview/sim.hpp"
#include "json.hpp"

namespace rview {

inline constexpr int kDatasetSchema = 1;

/// Line-delimited JSON: a header object, then one trajectory object per line.
void write_dataset(const Dataset& d, std::ostream& out);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

/// Throws VersionError for an unknown schema and ParseError (with line number) for malformed lines.
/// A header declaring angle_convention "full" is normalized to half-angles on load.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json scenario_to_json(const Scenario& sc, DynamicsMode mode);
/// Parses the scenario sub-schema. `h` and `start` are not part of it and are left as given.
Scenario scenario_from_json(const nlohmann::json& j, double h, const AgentState& start);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace rview
