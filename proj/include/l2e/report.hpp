#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2e/selector.hpp"
#include "l2e/toynet.hpp"

namespace l2e {

/// 16 hex digits of FNV-1a 64 over the compact JSON text.
std::string config_hash(const nlohmann::json& config);

/// JSON run configuration: the experiment plus where artifacts go. Only the
/// experiment part feeds the config hash.
struct RunConfig {
  ExperimentConfig experiment;
  std::string output_dir = "l2e_out";
};

/// Unknown keys anywhere are rejected with validation-error; missing keys
/// keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field of a (materialized) configuration.
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const TrainingReport& report);

/// CSV with a header row; every data row ends with the config hash column.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns,
            std::string config_hash);
  /// Writes to an existing stream (e.g. stdout) instead of a file.
  CsvWriter(std::ostream& out, std::vector<std::string> columns,
            std::string config_hash);

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  void write_header();

  std::ofstream file_;
  std::ostream* out_;
  std::size_t n_columns_;
  std::vector<std::string> columns_;
  std::string hash_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

void write_threshold_csv(const std::filesystem::path& path,
                         const TrainingReport& report, const std::string& hash);

}  // namespace l2e
