#pragma once

// Text formats: CSV with 17 significant digits and '.' decimals, JSON configs.

#include "fpdrift/experiments.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fpdrift {

class IoError : public Error {
public:
  using Error::Error;
};

/// %.17g, locale independent.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Values of the named column; throws IoError if absent.
  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Column `y`.
std::vector<double> read_observations(const std::filesystem::path& path);
void write_observations(std::ostream& out, const std::vector<double>& points);

/// Preset name ("reference", "poly:c0,c1,...") or a CSV with a `mu` column of nodal values.
DriftField load_drift(const std::string& spec, const Mesh& mesh);

ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelSpec& m);
NewtonConfig newton_from_json(const nlohmann::json& j, FidelityKind kind);
nlohmann::json to_json(const NewtonConfig& c);
StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& c);

nlohmann::json read_json(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace fpdrift
