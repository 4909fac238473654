// l2e: command-line front end for dumps, analyses, selector benchmarks and
// toy training runs. Every CSV carries a config_hash column.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "l2e/dump.hpp"
#include "l2e/error.hpp"
#include "l2e/feature_analysis.hpp"
#include "l2e/kernels.hpp"
#include "l2e/report.hpp"
#include "l2e/selector.hpp"
#include "l2e/stats.hpp"
#include "l2e/toynet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace l2e;

namespace {

// CSV to a file when --out is given, otherwise to stdout.
struct CsvSink {
  std::unique_ptr<CsvWriter> writer;

  CsvSink(const std::string& out, std::vector<std::string> columns,
          const std::string& hash) {
    if (out.empty() || out == "-") {
      writer = std::make_unique<CsvWriter>(std::cout, std::move(columns), hash);
    } else {
      writer = std::make_unique<CsvWriter>(fs::path(out), std::move(columns), hash);
    }
  }
  void row(const std::vector<std::string>& cells) { writer->row(cells); }
  void close() { writer->close(); }
};

std::string quote_message(const std::string& s) {
  std::string out;
  for (const char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n') ? ' ' : c;
  }
  return out;
}

int report_error(const std::string& code, const std::string& message) {
  std::cerr << "error code=" << code << " message=\"" << quote_message(message)
            << "\"\n";
  return code == "invalid-argument" ? 2 : 1;
}

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(double v) { return format_double(v); }

// --- stats ---------------------------------------------------------------

struct StatsArgs {
  std::string dump;
  std::string out;
};

void run_stats(const StatsArgs& a) {
  DumpReader reader(a.dump);
  const std::size_t n = reader.header().n_neurons;
  NeuronStatsBank bank = create_bank(n);
  DumpRecord rec;
  while (reader.next(rec)) bank.update_and_score(std::span<const float>(rec.values));

  const json cfg{{"command", "stats"}, {"dump", fs::path(a.dump).filename().string()},
                 {"records", reader.record_count()}};
  CsvSink csv(a.out, {"neuron", "count", "mean", "variance"}, config_hash(cfg));
  for (std::size_t j = 0; j < n; ++j) {
    const double var = bank.count(j) >= kMinCount ? bank.variance(j) : 0.0;
    csv.row({str(j), str(static_cast<std::size_t>(bank.count(j))), str(bank.mean(j)),
             str(var)});
  }
  csv.close();
}

// --- probe ---------------------------------------------------------------

struct ProbeArgs {
  std::string dump;
  std::string labels;
  std::string out;
};

void run_probe(const ProbeArgs& a) {
  const ActivationTable table = load_dump(a.dump);
  const MsTable ms = compute_ms_table(table);
  std::optional<std::vector<std::int64_t>> bindings;
  if (!a.labels.empty()) {
    bindings = read_bindings_csv(a.labels);
    require(bindings->size() == table.n_neurons, errc::validation_error,
            "binding table does not match the dump's neuron count");
  }

  std::vector<std::string> columns{"neuron",  "mono_feature",  "feature_name",
                                   "phi_l",   "phi_l_minus",   "count_l",
                                   "count_l_minus", "probe_f1", "degenerate"};
  if (bindings) {
    columns.emplace_back("bound_feature");
    columns.emplace_back("recovered");
  }
  const json cfg{{"command", "probe"},
                 {"dump", fs::path(a.dump).filename().string()},
                 {"labels", a.labels.empty() ? "" : fs::path(a.labels).filename().string()}};
  CsvSink csv(a.out, columns, config_hash(cfg));

  std::vector<double> col(table.rows());
  for (std::size_t j = 0; j < table.n_neurons; ++j) {
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = ms.ms(i, j);
    const MonoFeature mono = relatively_mono_feature(col, table.labels);
    const FeaturePartitionReport part = partition_means(col, table.labels, mono.feature);
    const std::vector<float> acts = table.column(j);
    const double f1 = mean_diff_probe(std::span<const float>(acts), table.labels, mono.feature);
    const bool degenerate =
        std::find(ms.degenerate.begin(), ms.degenerate.end(), j) != ms.degenerate.end();
    std::vector<std::string> cells{str(j),
                                   str(static_cast<std::size_t>(mono.feature)),
                                   table.feature_names.at(mono.feature),
                                   str(part.phi_l),
                                   str(part.phi_l_minus),
                                   str(part.count_l),
                                   str(part.count_l_minus),
                                   str(f1),
                                   degenerate ? "1" : "0"};
    if (bindings) {
      const std::int64_t b = (*bindings)[j];
      cells.push_back(std::to_string(b));
      cells.push_back(b == kUnbound ? "" : (b == mono.feature ? "1" : "0"));
    }
    csv.row(cells);
  }
  csv.close();
}

// --- ks ------------------------------------------------------------------

struct KsArgs {
  std::vector<std::string> dumps;
  std::size_t neurons = 0;  // 0 = every non-degenerate neuron
  std::uint64_t seed = 0;
  std::string out;
};

void run_ks(const KsArgs& a) {
  std::vector<ScaleSamples> scales;
  json names = json::array();
  for (const std::string& path : a.dumps) {
    const ActivationTable table = load_dump(path);
    const MsTable ms = compute_ms_table(table);
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < table.n_neurons; ++j) {
      if (std::find(ms.degenerate.begin(), ms.degenerate.end(), j) == ms.degenerate.end()) {
        pool.push_back(j);
      }
    }
    if (pool.empty()) {
      fail(errc::insufficient_valid_neurons, path + " has no neuron with usable variance");
    }
    std::vector<std::size_t> chosen = pool;
    if (a.neurons > 0 && a.neurons < pool.size()) {
      chosen.clear();
      std::mt19937_64 rng(a.seed);
      std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), a.neurons, rng);
    }
    ScaleSamples s;
    s.name = fs::path(path).stem().string();
    s.labels = table.labels;
    for (const std::size_t j : chosen) {
      std::vector<double> col(table.rows());
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = ms.ms(i, j);
      s.ms.push_back(std::move(col));
    }
    names.push_back(s.name);
    scales.push_back(std::move(s));
  }
  const std::vector<ScaleKsResult> res = scale_ks_scan(scales);
  const json cfg{{"command", "ks"}, {"scales", names}, {"neurons", a.neurons}, {"seed", a.seed}};
  CsvSink csv(a.out, {"scale", "n_neurons", "d_pooled", "d_neuron_mean"}, config_hash(cfg));
  for (const ScaleKsResult& r : res) {
    csv.row({r.name, str(r.n_neurons), str(r.d_pooled), str(r.d_neuron_mean)});
  }
  csv.close();
}

// --- fkr -----------------------------------------------------------------

struct FkrArgs {
  std::string dump;
  std::vector<double> rates{0.005, 0.01, 0.02, 0.03, 0.05};
  std::string out;
};

void run_fkr(const FkrArgs& a) {
  require(!a.rates.empty(), errc::invalid_argument, "--rates is empty");
  const ActivationTable table = load_dump(a.dump);
  const MsTable ms = compute_ms_table(table);
  const std::vector<FeatureId> mono = mono_features_of(ms.ms, table.labels);

  std::vector<std::size_t> order(a.rates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a.rates[x] < a.rates[y]; });
  std::vector<double> sorted;
  for (const std::size_t o : order) sorted.push_back(a.rates[o]);
  const std::vector<FkrReport> curve = fkr_curve(ms.ms, table.labels, mono, sorted);
  std::vector<FkrReport> by_input(curve.size());
  for (std::size_t s = 0; s < order.size(); ++s) by_input[order[s]] = curve[s];

  const json cfg{{"command", "fkr"}, {"dump", fs::path(a.dump).filename().string()},
                 {"rates", a.rates}};
  CsvSink csv(a.out, {"rate", "k", "tau_k", "inhibitions", "false_kills", "fkr"},
              config_hash(cfg));
  for (const FkrReport& r : by_input) {
    csv.row({str(r.rate), str(r.k), str(r.tau_k), str(r.inhibitions), str(r.false_kills),
             str(r.fkr)});
  }
  csv.close();
}

// --- bench-select --------------------------------------------------------

struct BenchArgs {
  BenchOptions opts;
  std::string out;
};

void run_bench(const BenchArgs& a) {
  const std::vector<BenchRow> rows = bench_selection(a.opts);
  const json cfg{{"command", "bench-select"},
                 {"neurons", a.opts.n_neurons},
                 {"rate", a.opts.rate},
                 {"batches", a.opts.batches},
                 {"seed", a.opts.seed}};
  CsvSink csv(a.out,
              {"strategy", "n_neurons", "rate", "batches", "mean_ms", "stddev_ms",
               "mean_k_star"},
              config_hash(cfg));
  for (const BenchRow& r : rows) {
    csv.row({r.strategy, str(r.n_neurons), str(r.rate), str(r.batches), str(r.mean_ms),
             str(r.stddev_ms), str(r.mean_k_star)});
  }
  csv.close();
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(errc::io_error, "cannot create " + path.string());
  f << j.dump(2) << '\n';
  f.close();
  if (!f) fail(errc::io_error, "write failed: " + path.string());
}

void run_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? parse_run_config(json::object())
                                  : load_run_config(a.config);
  if (a.seed) {
    rc.experiment.task.seed = *a.seed;
    rc.experiment.train.seed = *a.seed;
  }
  if (!a.out.empty()) rc.output_dir = a.out;
  rc.experiment.materialize();
  rc.experiment.validate();

  const json snapshot = to_json(rc.experiment);
  const std::string hash = config_hash(snapshot);
  const auto [baseline, l2e_arm] = run_experiment(rc.experiment);

  const fs::path dir(rc.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(errc::io_error, "cannot create " + dir.string() + ": " + ec.message());

  for (const TrainingReport* r : {&baseline, &l2e_arm}) {
    json j = to_json(*r);
    j["config"] = snapshot;
    j["config_hash"] = hash;
    write_json(dir / (r->arm + ".json"), j);
    write_threshold_csv(dir / (r->arm + "_thresholds.csv"), *r, hash);
  }

  CsvSink summary((dir / "summary.csv").string(),
                  {"arm", "lambda", "seed", "final_train_accuracy", "final_eval_accuracy",
                   "mean_final_tau_star"},
                  hash);
  for (const TrainingReport* r : {&baseline, &l2e_arm}) {
    summary.row({r->arm, str(r->lambda), std::to_string(r->seed),
                 str(r->final_train_accuracy), str(r->final_eval_accuracy),
                 str(r->mean_final_tau())});
  }
  summary.close();
}

// --- gen-dump ------------------------------------------------------------

struct GenArgs {
  GenDumpSpec spec;
  std::string out;
  std::string bindings;
};

void run_gen(const GenArgs& a) {
  const GeneratedDump g = gen_dump(a.spec);
  write_dump(a.out, g.table);
  const std::string bind = a.bindings.empty() ? a.out + ".bindings.csv" : a.bindings;
  write_bindings_csv(bind, g.bindings);
}

}  // namespace

int main(int argc, char** argv) {
  kernels::apply_thread_limit_from_env();

  CLI::App app{"l2e: monosemanticity statistics, selection and inhibition tools"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "per-neuron count/mean/variance of a dump");
  c_stats->add_option("--dump", stats.dump, "activation dump")->required();
  c_stats->add_option("--out", stats.out, "CSV path (default stdout)");

  ProbeArgs probe;
  auto* c_probe = app.add_subcommand(
      "probe", "relatively monosemantic feature, partition means and probe F1 per neuron");
  c_probe->add_option("--dump", probe.dump, "activation dump")->required();
  c_probe->add_option("--labels", probe.labels, "ground-truth binding CSV from gen-dump");
  c_probe->add_option("--out", probe.out, "CSV path (default stdout)");

  KsArgs ks;
  auto* c_ks = app.add_subcommand("ks", "K-S distance per scale; one --dump per scale");
  c_ks->add_option("--dump", ks.dumps, "activation dump (repeatable)")->required();
  c_ks->add_option("--neurons", ks.neurons, "neurons sampled per scale (0 = all)");
  c_ks->add_option("--seed", ks.seed, "sampling seed");
  c_ks->add_option("--out", ks.out, "CSV path (default stdout)");

  FkrArgs fkr_args;
  auto* c_fkr = app.add_subcommand("fkr", "false killing rate per inhibition rate");
  c_fkr->add_option("--dump", fkr_args.dump, "activation dump")->required();
  c_fkr->add_option("--rates", fkr_args.rates, "comma-separated rates in (0, 1]")
      ->delimiter(',');
  c_fkr->add_option("--out", fkr_args.out, "CSV path (default stdout)");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench-select", "time top-k selection strategies");
  c_bench->add_option("--neurons", bench.opts.n_neurons, "MS vector length");
  c_bench->add_option("--rate", bench.opts.rate, "inhibition rate");
  c_bench->add_option("--batches", bench.opts.batches, "timed batches");
  c_bench->add_option("--seed", bench.opts.seed, "workload seed");
  c_bench->add_option("--out", bench.out, "CSV path (default stdout)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "baseline vs inhibited toy training run");
  c_train->add_option("--config", train.config, "JSON run configuration");
  c_train->add_option("--seed", train.seed, "overrides task and training seeds");
  c_train->add_option("--out", train.out, "output directory");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-dump", "write a synthetic activation dump");
  c_gen->add_option("--out", gen.out, "dump path")->required();
  c_gen->add_option("--labels", gen.bindings,
                    "binding CSV path (default <out>.bindings.csv)");
  c_gen->add_option("--mono", gen.spec.n_mono, "monosemantic neurons");
  c_gen->add_option("--background", gen.spec.n_background, "background neurons");
  c_gen->add_option("--features", gen.spec.n_features, "feature count");
  c_gen->add_option("--records", gen.spec.n_records, "record count");
  c_gen->add_option("--shift", gen.spec.shift, "mono mean shift in noise sigmas");
  c_gen->add_option("--noise", gen.spec.noise, "noise standard deviation");
  c_gen->add_option("--seed", gen.spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("invalid-argument", e.what());
  }

  try {
    if (*c_stats) run_stats(stats);
    else if (*c_probe) run_probe(probe);
    else if (*c_ks) run_ks(ks);
    else if (*c_fkr) run_fkr(fkr_args);
    else if (*c_bench) run_bench(bench);
    else if (*c_train) run_train(train);
    else if (*c_gen) run_gen(gen);
  } catch (const error& e) {
    return report_error(std::string(to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
