#include <doctest.h>

#include <sys/resource.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "l2e/dump.hpp"
#include "l2e/error.hpp"
#include "l2e/report.hpp"
#include "oracles.hpp"

using namespace l2e;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("l2e_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

ActivationTable small_table() {
  ActivationTable t;
  t.feature_names = {"alpha", "beta", "gamma"};
  t.n_neurons = 3;
  t.labels = {0, 2, 1, 1};
  t.values = {1.f, -2.f, 0.5f, 3.25f, 0.f, -0.f, 1e-30f, 7.f, -1e20f, 2.f, 2.f, 2.f};
  return t;
}

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return errc::invalid_argument;
}

long max_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

}  // namespace

TEST_CASE("dump layout is byte exact") {
  TempDir dir("layout");
  const ActivationTable t = small_table();
  write_dump(dir / "a.l2ea", t);
  const std::string bytes = slurp(dir / "a.l2ea");
  const std::size_t header = 4 + 4 + 4 + 4 + (4 + 5) + (4 + 4) + (4 + 5);
  REQUIRE(bytes.size() == header + 4 * (4 + 4 * 3));
  CHECK(bytes.substr(0, 4) == "L2EA");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 3);
  CHECK(bytes.substr(20, 5) == "alpha");
  // first record: label 0 then 1.0f little-endian
  CHECK(bytes.substr(header, 8) == std::string("\0\0\0\0\0\0\x80\x3f", 8));

  const ActivationTable back = load_dump(dir / "a.l2ea");
  CHECK(back.feature_names == t.feature_names);
  CHECK(back.labels == t.labels);
  CHECK(back.n_neurons == 3);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    CHECK(std::signbit(back.values[i]) == std::signbit(t.values[i]));
    CHECK(back.values[i] == t.values[i]);
  }
  write_dump(dir / "b.l2ea", back);
  CHECK(slurp(dir / "b.l2ea") == bytes);

  DumpHeader h;
  h.n_neurons = 3;
  h.feature_names = t.feature_names;
  CHECK(h.encoded_size() == header);
}

TEST_CASE("dump errors") {
  TempDir dir("errors");
  write_dump(dir / "ok.l2ea", small_table());
  const std::string bytes = slurp(dir / "ok.l2ea");

  std::string bad = bytes;
  bad[0] = 'X';
  spit(dir / "magic.l2ea", bad);
  CHECK(code_of([&] { load_dump(dir / "magic.l2ea"); }) == errc::format_error);

  bad = bytes;
  bad[4] = 2;
  spit(dir / "version.l2ea", bad);
  CHECK(code_of([&] { load_dump(dir / "version.l2ea"); }) == errc::format_error);

  spit(dir / "short_header.l2ea", bytes.substr(0, 22));
  CHECK(code_of([&] { load_dump(dir / "short_header.l2ea"); }) ==
        errc::truncation_error);

  spit(dir / "partial.l2ea", bytes.substr(0, bytes.size() - 3));
  CHECK(code_of([&] { load_dump(dir / "partial.l2ea"); }) == errc::truncation_error);

  ActivationTable t = small_table();
  t.labels[2] = 3;
  // the writer validates labels too; build the bad file by patching bytes
  bad = bytes;
  const std::size_t header = bytes.size() - 4 * 16;
  bad[header + 2 * 16] = 7;
  spit(dir / "label.l2ea", bad);
  CHECK(code_of([&] { load_dump(dir / "label.l2ea"); }) == errc::validation_error);

  CHECK(code_of([&] { load_dump(dir / "missing.l2ea"); }) == errc::io_error);
}

TEST_CASE("streaming a large dump keeps memory bounded") {
  TempDir dir("stream");
  const fs::path path = dir / "big.l2ea";
  constexpr std::size_t kRecords = 1'000'000;
  {
    DumpHeader h;
    h.n_neurons = 8;
    h.feature_names = {"a", "b"};
    DumpWriter w(path, h);
    std::vector<float> v(8);
    for (std::size_t i = 0; i < kRecords; ++i) {
      for (std::size_t j = 0; j < 8; ++j) v[j] = static_cast<float>(i % 97 + j);
      w.write(static_cast<FeatureId>(i & 1), v);
    }
    w.close();
  }
  CHECK(fs::file_size(path) > 36'000'000);
  const long before = max_rss_kb();
  DumpReader r(path);
  CHECK(r.record_count() == kRecords);
  DumpRecord rec;
  std::size_t n = 0;
  double sum = 0.0;
  while (r.next(rec)) {
    sum += rec.values[7];
    ++n;
  }
  CHECK(n == kRecords);
  CHECK(sum > 0.0);
  // whole file would be ~36 MB; streaming must stay far below that
  CHECK(max_rss_kb() - before < 8 * 1024);
}

TEST_CASE("gen_dump") {
  SUBCASE("deterministic") {
    GenDumpSpec s;
    s.n_records = 500;
    const GeneratedDump a = gen_dump(s);
    const GeneratedDump b = gen_dump(s);
    CHECK(a.table.values == b.table.values);
    CHECK(a.table.labels == b.table.labels);
    CHECK(a.bindings == b.bindings);
    CHECK(a.table.n_neurons == 64);
    CHECK(a.table.feature_names.size() == 9);
  }
  SUBCASE("single mono neuron is recovered") {
    GenDumpSpec s;
    s.n_mono = 1;
    s.n_background = 0;
    s.n_records = 4000;
    const GeneratedDump g = gen_dump(s);
    const MsTable ms = compute_ms_table(g.table);
    const auto mono = mono_features_of(ms.ms, g.table.labels);
    REQUIRE(mono.size() == 1);
    CHECK(static_cast<std::int64_t>(mono[0]) == g.bindings[0]);
    CHECK(ms.degenerate.empty());
  }
  SUBCASE("no mono neurons: false kills are about (F-1)/F") {
    GenDumpSpec s;
    s.n_mono = 0;
    s.n_background = 64;
    const GeneratedDump g = gen_dump(s);
    const MsTable ms = compute_ms_table(g.table);
    const auto mono = mono_features_of(ms.ms, g.table.labels);
    const FkrReport r = fkr(ms.ms, g.table.labels, mono, 0.02);
    CHECK(r.fkr == doctest::Approx(8.0 / 9.0).epsilon(0.05));
  }
  SUBCASE("zero shift gives small KS") {
    GenDumpSpec s;
    s.shift = 0.0;
    const GeneratedDump g = gen_dump(s);
    const MsTable ms = compute_ms_table(g.table);
    std::vector<double> col(ms.ms.rows);
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = ms.ms(i, j);
      CHECK(neuron_ks(col, g.table.labels) < 0.1);
    }
  }
  SUBCASE("invalid spec") {
    GenDumpSpec s;
    s.n_features = 1;
    CHECK_THROWS_AS(gen_dump(s), error);
    s = GenDumpSpec{};
    s.n_mono = 0;
    s.n_background = 0;
    CHECK_THROWS_AS(gen_dump(s), error);
  }
  SUBCASE("bindings csv round trip") {
    TempDir dir("bind");
    const std::vector<std::int64_t> b{3, kUnbound, 0, 8};
    write_bindings_csv(dir / "b.csv", b);
    CHECK(slurp(dir / "b.csv") == "neuron,bound_feature\n0,3\n1,-1\n2,0\n3,8\n");
    CHECK(read_bindings_csv(dir / "b.csv") == b);
  }
}

TEST_CASE("degenerate columns") {
  ActivationTable t = small_table();
  for (std::size_t i = 0; i < t.rows(); ++i) t.values[i * 3 + 2] = 4.f;
  const MsTable ms = compute_ms_table(t);
  CHECK(ms.degenerate == std::vector<std::size_t>{2});
  for (std::size_t i = 0; i < t.rows(); ++i) CHECK(ms.ms(i, 2) == 0.0);
}

TEST_CASE("run configuration") {
  const RunConfig d = parse_run_config(nlohmann::json::object());
  CHECK(d.experiment.inhibition.rate == 0.02);
  CHECK(d.experiment.train.steps == 1500);
  CHECK(d.output_dir == "l2e_out");

  const auto j = nlohmann::json::parse(R"({
    "output": {"dir": "x"},
    "task": {"seed": 4, "noise": 0.5},
    "net": {"depth": 4, "width": 8, "activation": "identity"},
    "inhibition": {"rate": 0.05, "lambda": 0.01, "hooked_layers": [1]},
    "train": {"steps": 10}
  })");
  const RunConfig c = parse_run_config(j);
  CHECK(c.output_dir == "x");
  CHECK(c.experiment.task.seed == 4);
  CHECK(c.experiment.net.activation == Activation::identity);
  CHECK(c.experiment.inhibition.hooked_layers == std::vector<std::size_t>{1});
  CHECK(c.experiment.train.steps == 10);

  CHECK(code_of([] { parse_run_config(nlohmann::json::parse(R"({"bogus": 1})")); }) ==
        errc::validation_error);
  CHECK(code_of([] {
          parse_run_config(nlohmann::json::parse(R"({"train": {"stepz": 1}})"));
        }) == errc::validation_error);
  CHECK(code_of([] {
          parse_run_config(nlohmann::json::parse(R"({"inhibition": {"rate": 2}})"));
        }) == errc::validation_error);
  CHECK(code_of([] { load_run_config("/nonexistent/cfg.json"); }) == errc::io_error);
}

TEST_CASE("config hash and csv") {
  const auto a = nlohmann::json::parse(R"({"b": 1, "a": [1, 2]})");
  const auto b = nlohmann::json::parse(R"({"a": [1, 2], "b": 1})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(nlohmann::json::parse(R"({"b": 2, "a": [1, 2]})")));
  // FNV-1a 64 of the empty object text "{}"
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : std::string("{}")) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  char expect[17];
  std::snprintf(expect, sizeof expect, "%016llx", static_cast<unsigned long long>(h));
  CHECK(config_hash(nlohmann::json::object()) == expect);

  std::ostringstream out;
  CsvWriter w(out, {"x", "y"}, "abc");
  w.row({"1", "2"});
  w.row({format_double(0.1), format_double(1e-300)});
  CHECK(out.str() == "x,y,config_hash\n1,2,abc\n0.1,1e-300,abc\n");
  CHECK_THROWS_AS(w.row({"only one"}), error);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("experiment json is complete and stable") {
  ExperimentConfig cfg;
  cfg.materialize();
  const nlohmann::json j = to_json(cfg);
  for (const char* key : {"task", "net", "inhibition", "train"}) CHECK(j.contains(key));
  nlohmann::json wrapped = j;
  const RunConfig back = parse_run_config(wrapped);
  CHECK(to_json(back.experiment) == j);
}

TEST_CASE("natural-language-shaped dump: 28084 records x 512 neurons x 9 features") {
  TempDir dir("shape");
  GenDumpSpec s;
  s.n_mono = 9;
  s.n_background = 503;
  s.n_records = 28'084;
  const GeneratedDump g = gen_dump(s);
  write_dump(dir / "nl.l2ea", g.table);
  DumpReader r(dir / "nl.l2ea");
  CHECK(r.record_count() == 28'084);
  CHECK(r.header().n_neurons == 512);
  CHECK(r.header().n_features() == 9);
  CHECK(fs::file_size(dir / "nl.l2ea") ==
        r.header().encoded_size() + 28'084ULL * r.header().record_size());
  const FeatureDataset labels = r.labels();
  CHECK(labels.labels == g.table.labels);
}
