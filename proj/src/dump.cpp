#include "l2e/dump.hpp"

#include <bit>
#include <cstring>
#include <random>
#include <sstream>

#include "l2e/error.hpp"
#include "l2e/stats.hpp"

namespace l2e {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

constexpr std::uint32_t kMaxNameBytes = 1U << 16;

}  // namespace

std::uint64_t DumpHeader::encoded_size() const noexcept {
  std::uint64_t n = 16;
  for (const std::string& name : feature_names) n += 4 + name.size();
  return n;
}

DumpReader::DumpReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(errc::io_error, "cannot open " + path.string());
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) fail(errc::io_error, "cannot stat " + path.string());

  char fixed[16];
  in_.read(fixed, sizeof fixed);
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got < 4 || std::memcmp(fixed, kDumpMagic, 4) != 0) {
    if (got < 4 && std::memcmp(fixed, kDumpMagic, got) == 0) {
      fail(errc::truncation_error, "file ends inside the magic");
    }
    fail(errc::format_error, "bad magic, not an L2EA dump");
  }
  if (got < sizeof fixed) fail(errc::truncation_error, "truncated header");
  const std::uint32_t version = get_u32(fixed + 4);
  if (version != kDumpVersion) {
    fail(errc::format_error, "unsupported dump version " + std::to_string(version));
  }
  header_.n_neurons = get_u32(fixed + 8);
  const std::uint32_t n_features = get_u32(fixed + 12);
  if (header_.n_neurons == 0) fail(errc::format_error, "dump has zero neurons");
  if (n_features == 0) fail(errc::format_error, "dump has zero features");

  for (std::uint32_t f = 0; f < n_features; ++f) {
    char len_bytes[4];
    in_.read(len_bytes, 4);
    if (in_.gcount() != 4) fail(errc::truncation_error, "truncated feature table");
    const std::uint32_t len = get_u32(len_bytes);
    if (len > kMaxNameBytes) fail(errc::format_error, "feature name too long");
    std::string name(len, '\0');
    in_.read(name.data(), len);
    if (static_cast<std::uint32_t>(in_.gcount()) != len) {
      fail(errc::truncation_error, "truncated feature name");
    }
    header_.feature_names.push_back(std::move(name));
  }

  const std::uint64_t head = header_.encoded_size();
  const std::uint64_t body = file_size - head;
  if (body % header_.record_size() != 0) {
    fail(errc::truncation_error,
         "trailing partial record (" +
             std::to_string(body % header_.record_size()) + " bytes)");
  }
  records_ = body / header_.record_size();
  buffer_.resize(header_.record_size());
}

bool DumpReader::next(DumpRecord& rec) {
  if (position_ >= records_) return false;
  in_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (static_cast<std::size_t>(in_.gcount()) != buffer_.size()) {
    fail(errc::truncation_error, "record " + std::to_string(position_) +
                                     " is truncated");
  }
  rec.label = get_u32(buffer_.data());
  if (rec.label >= header_.n_features()) {
    fail(errc::validation_error, "record " + std::to_string(position_) +
                                     " has label " + std::to_string(rec.label) +
                                     " >= n_features");
  }
  rec.values.resize(header_.n_neurons);
  const char* p = buffer_.data() + 4;
  for (std::uint32_t j = 0; j < header_.n_neurons; ++j) {
    rec.values[j] = std::bit_cast<float>(get_u32(p + 4 * j));
  }
  ++position_;
  return true;
}

void DumpReader::rewind() {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(header_.encoded_size()));
  position_ = 0;
}

FeatureDataset DumpReader::labels() {
  FeatureDataset ds;
  ds.feature_names = header_.feature_names;
  ds.labels.reserve(records_);
  const std::uint64_t head = header_.encoded_size();
  for (std::uint64_t r = 0; r < records_; ++r) {
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(head + r * header_.record_size()));
    char bytes[4];
    in_.read(bytes, 4);
    if (in_.gcount() != 4) fail(errc::truncation_error, "truncated label");
    const std::uint32_t label = get_u32(bytes);
    if (label >= header_.n_features()) {
      fail(errc::validation_error,
           "record " + std::to_string(r) + " label out of range");
    }
    ds.labels.push_back(label);
  }
  rewind();
  return ds;
}

DumpWriter::DumpWriter(const std::filesystem::path& path, DumpHeader header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(std::move(header)) {
  if (!out_) fail(errc::io_error, "cannot create " + path.string());
  require(header_.n_neurons >= 1, errc::invalid_argument,
          "dump needs at least one neuron");
  require(!header_.feature_names.empty(), errc::invalid_argument,
          "dump needs at least one feature");
  std::vector<char> head(kDumpMagic, kDumpMagic + 4);
  put_u32(head, kDumpVersion);
  put_u32(head, header_.n_neurons);
  put_u32(head, header_.n_features());
  for (const std::string& name : header_.feature_names) {
    require(name.size() <= kMaxNameBytes, errc::invalid_argument,
            "feature name too long");
    put_u32(head, static_cast<std::uint32_t>(name.size()));
    head.insert(head.end(), name.begin(), name.end());
  }
  out_.write(head.data(), static_cast<std::streamsize>(head.size()));
  buffer_.reserve(header_.record_size());
}

void DumpWriter::write(FeatureId label, std::span<const float> values) {
  require(values.size() == header_.n_neurons, errc::invalid_argument,
          "record width differs from header");
  require(label < header_.n_features(), errc::validation_error,
          "label out of range");
  buffer_.clear();
  put_u32(buffer_, label);
  for (const float v : values) put_u32(buffer_, std::bit_cast<std::uint32_t>(v));
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
}

void DumpWriter::close() {
  out_.flush();
  if (!out_) fail(errc::io_error, "write failed");
  out_.close();
}

std::vector<float> ActivationTable::column(std::size_t j) const {
  std::vector<float> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) out[i] = values[i * n_neurons + j];
  return out;
}

ActivationTable load_dump(const std::filesystem::path& path) {
  DumpReader reader(path);
  ActivationTable t;
  t.feature_names = reader.header().feature_names;
  t.n_neurons = reader.header().n_neurons;
  t.labels.reserve(reader.record_count());
  t.values.reserve(reader.record_count() * t.n_neurons);
  DumpRecord rec;
  while (reader.next(rec)) {
    t.labels.push_back(rec.label);
    t.values.insert(t.values.end(), rec.values.begin(), rec.values.end());
  }
  return t;
}

void write_dump(const std::filesystem::path& path, const ActivationTable& table) {
  DumpHeader h;
  h.n_neurons = static_cast<std::uint32_t>(table.n_neurons);
  h.feature_names = table.feature_names;
  DumpWriter w(path, std::move(h));
  for (std::size_t i = 0; i < table.rows(); ++i) {
    w.write(table.labels[i], table.record(i));
  }
  w.close();
}

MsTable compute_ms_table(const ActivationTable& table) {
  MsTable out;
  out.ms = MsMatrix(table.rows(), table.n_neurons);
  for (std::size_t j = 0; j < table.n_neurons; ++j) {
    const std::vector<float> col = table.column(j);
    try {
      const std::vector<double> ms = retrospective_ms(std::span<const float>(col));
      for (std::size_t i = 0; i < ms.size(); ++i) out.ms(i, j) = ms[i];
    } catch (const error& e) {
      if (e.code() != errc::degenerate_neuron) throw;
      out.degenerate.push_back(j);
    }
  }
  return out;
}

void GenDumpSpec::validate() const {
  require(n_mono + n_background >= 1, errc::invalid_argument,
          "need at least one neuron");
  require(n_features >= 2, errc::invalid_argument, "need at least two features");
  require(n_records >= 1, errc::invalid_argument, "need at least one record");
  require(shift >= 0.0 && noise > 0.0, errc::invalid_argument,
          "shift must be >= 0 and noise > 0");
}

GeneratedDump gen_dump(const GenDumpSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_mono + spec.n_background;
  GeneratedDump g;
  g.bindings.assign(n, kUnbound);
  for (std::size_t m = 0; m < spec.n_mono; ++m) {
    g.bindings[m] = static_cast<std::int64_t>(m % spec.n_features);
  }
  ActivationTable& t = g.table;
  t.n_neurons = n;
  for (std::size_t f = 0; f < spec.n_features; ++f) {
    t.feature_names.push_back("feature_" + std::to_string(f));
  }
  t.labels.resize(spec.n_records);
  t.values.resize(spec.n_records * n);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, spec.noise);
  std::uniform_int_distribution<FeatureId> pick(
      0, static_cast<FeatureId>(spec.n_features - 1));
  const double offset = spec.shift * spec.noise;
  for (std::size_t i = 0; i < spec.n_records; ++i) {
    const FeatureId label = pick(rng);
    t.labels[i] = label;
    for (std::size_t j = 0; j < n; ++j) {
      double v = gauss(rng);
      if (g.bindings[j] == static_cast<std::int64_t>(label)) v += offset;
      t.values[i * n + j] = static_cast<float>(v);
    }
  }
  return g;
}

void write_bindings_csv(const std::filesystem::path& path,
                        std::span<const std::int64_t> bindings) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot create " + path.string());
  out << "neuron,bound_feature\n";
  for (std::size_t j = 0; j < bindings.size(); ++j) {
    out << j << ',' << bindings[j] << '\n';
  }
  if (!out) fail(errc::io_error, "write failed");
}

std::vector<std::int64_t> read_bindings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "neuron,bound_feature") {
    fail(errc::format_error, "bindings file lacks the expected header");
  }
  std::vector<std::int64_t> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(errc::format_error, "bad bindings row");
    try {
      const auto neuron = std::stoull(line.substr(0, comma));
      if (neuron != out.size()) {
        fail(errc::format_error, "bindings rows must be in neuron order");
      }
      out.push_back(std::stoll(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      fail(errc::format_error, "bad bindings row: " + line);
    }
  }
  return out;
}

}  // namespace l2e
