#pragma once

// Binary activation dump ("L2EA", version 1). All integers and floats are
// little-endian.
//
//   magic        4 bytes  "L2EA"
//   version      u32      1
//   n_neurons    u32
//   n_features   u32
//   names        n_features x (u32 byte length, UTF-8 bytes)
//   records      until EOF: u32 label_id, n_neurons x f32
//
// The record count is (file size - header size) / (4 + 4 * n_neurons).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "l2e/feature_analysis.hpp"
#include "l2e/matrix.hpp"
#include "l2e/selector.hpp"

namespace l2e {

inline constexpr char kDumpMagic[4] = {'L', '2', 'E', 'A'};
inline constexpr std::uint32_t kDumpVersion = 1;

struct DumpHeader {
  std::uint32_t n_neurons = 0;
  std::vector<std::string> feature_names;

  std::uint32_t n_features() const noexcept {
    return static_cast<std::uint32_t>(feature_names.size());
  }
  std::uint64_t encoded_size() const noexcept;
  std::uint64_t record_size() const noexcept { return 4ULL + 4ULL * n_neurons; }
};

struct DumpRecord {
  FeatureId label = 0;
  std::vector<float> values;
};

/// Streams records one at a time; memory use is one record plus the header.
class DumpReader {
 public:
  explicit DumpReader(const std::filesystem::path& path);

  const DumpHeader& header() const noexcept { return header_; }
  std::uint64_t record_count() const noexcept { return records_; }

  /// Reads the next record into rec (reusing its buffer). Returns false at
  /// end of file. Throws validation-error on an out-of-range label.
  bool next(DumpRecord& rec);
  void rewind();

  /// Labels of every record, read without touching activations.
  FeatureDataset labels();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  DumpHeader header_;
  std::uint64_t records_ = 0;
  std::uint64_t position_ = 0;
  std::vector<char> buffer_;
};

class DumpWriter {
 public:
  DumpWriter(const std::filesystem::path& path, DumpHeader header);

  void write(FeatureId label, std::span<const float> values);
  /// Flushes and closes; throws io-error if the stream failed.
  void close();

 private:
  std::ofstream out_;
  DumpHeader header_;
  std::vector<char> buffer_;
};

/// Whole dump in memory: rows are records, columns neurons.
struct ActivationTable {
  std::vector<std::string> feature_names;
  std::vector<FeatureId> labels;
  std::size_t n_neurons = 0;
  std::vector<float> values;  // labels.size() x n_neurons, row-major

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const float> record(std::size_t i) const {
    return {values.data() + i * n_neurons, n_neurons};
  }
  std::vector<float> column(std::size_t j) const;
  FeatureDataset dataset() const { return {labels, feature_names}; }
};

ActivationTable load_dump(const std::filesystem::path& path);
void write_dump(const std::filesystem::path& path, const ActivationTable& table);

/// Retrospective MS of every entry, per neuron over all records. Neurons with
/// degenerate variance get MS 0 and are listed in degenerate.
struct MsTable {
  MsMatrix ms;
  std::vector<std::size_t> degenerate;
};
MsTable compute_ms_table(const ActivationTable& table);

/// Seeded mixture: n_mono neurons bound to one feature each (mean shifted by
/// shift * noise on that feature), n_background pure-noise neurons.
struct GenDumpSpec {
  std::size_t n_mono = 6;
  std::size_t n_background = 58;
  std::size_t n_features = 9;
  std::size_t n_records = 10'000;
  double shift = 5.0;  // in units of the noise standard deviation
  double noise = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr std::int64_t kUnbound = -1;

struct GeneratedDump {
  ActivationTable table;
  /// Bound feature per neuron, kUnbound for background neurons.
  std::vector<std::int64_t> bindings;
};

GeneratedDump gen_dump(const GenDumpSpec& spec);

void write_bindings_csv(const std::filesystem::path& path,
                        std::span<const std::int64_t> bindings);
std::vector<std::int64_t> read_bindings_csv(const std::filesystem::path& path);

}  // namespace l2e
