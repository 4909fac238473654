#include "l2e/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <initializer_list>

#include "l2e/error.hpp"

namespace l2e {

using nlohmann::json;

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) fail(errc::validation_error, where + " must be an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) {
      fail(errc::validation_error,
           "unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(errc::validation_error, std::string("bad value for '") + key + "' in " + where);
  }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  ExperimentConfig& c = rc.experiment;
  check_keys(j, {"task", "net", "inhibition", "train", "hook_all_layers", "output"},
             "config");
  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, {"n_features", "input_dim", "n_samples", "center_scale", "noise", "seed"},
               "task");
    read(t, "n_features", c.task.n_features, "task");
    read(t, "input_dim", c.task.input_dim, "task");
    read(t, "n_samples", c.task.n_samples, "task");
    read(t, "center_scale", c.task.center_scale, "task");
    read(t, "noise", c.task.noise, "task");
    read(t, "seed", c.task.seed, "task");
  }
  if (j.contains("net")) {
    const json& n = j.at("net");
    check_keys(n, {"depth", "width", "activation"}, "net");
    read(n, "depth", c.net.depth, "net");
    read(n, "width", c.net.width, "net");
    std::string act = to_string(c.net.activation);
    read(n, "activation", act, "net");
    try {
      c.net.activation = activation_from_string(act);
    } catch (const error& e) {
      fail(errc::validation_error, e.what());
    }
  }
  if (j.contains("inhibition")) {
    const json& i = j.at("inhibition");
    check_keys(i, {"rate", "lambda", "epsilon", "hooked_layers", "warmup_batches"},
               "inhibition");
    read(i, "rate", c.inhibition.rate, "inhibition");
    read(i, "lambda", c.inhibition.lambda, "inhibition");
    read(i, "epsilon", c.inhibition.epsilon, "inhibition");
    read(i, "hooked_layers", c.inhibition.hooked_layers, "inhibition");
    read(i, "warmup_batches", c.inhibition.warmup_batches, "inhibition");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"steps", "batch_size", "learning_rate", "seed", "inhibition_enabled"},
               "train");
    read(t, "steps", c.train.steps, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "seed", c.train.seed, "train");
    read(t, "inhibition_enabled", c.train.inhibition_enabled, "train");
  }
  read(j, "hook_all_layers", c.hook_all_layers, "config");
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"dir"}, "output");
    read(o, "dir", rc.output_dir, "output");
  }
  try {
    c.materialize();
    c.validate();
  } catch (const error& e) {
    fail(errc::validation_error, e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(errc::format_error, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"task",
       {{"n_features", c.task.n_features},
        {"input_dim", c.task.input_dim},
        {"n_samples", c.task.n_samples},
        {"center_scale", c.task.center_scale},
        {"noise", c.task.noise},
        {"seed", c.task.seed}}},
      {"net",
       {{"depth", c.net.depth},
        {"width", c.net.width},
        {"activation", to_string(c.net.activation)}}},
      {"inhibition",
       {{"rate", c.inhibition.rate},
        {"lambda", c.inhibition.lambda},
        {"epsilon", c.inhibition.epsilon},
        {"hooked_layers", c.inhibition.hooked_layers},
        {"warmup_batches", c.inhibition.warmup_batches}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"seed", c.train.seed},
        {"inhibition_enabled", c.train.inhibition_enabled}}},
      {"hook_all_layers", c.hook_all_layers},
  };
}

json to_json(const TrainingReport& r) {
  json steps = json::object();
  std::vector<std::size_t> step;
  std::vector<double> task_loss;
  std::vector<double> ms_loss;
  std::vector<bool> warmup;
  std::vector<std::vector<double>> tau(r.hooked_layers.size());
  std::vector<std::vector<double>> k_star(r.hooked_layers.size());
  for (const StepRecord& s : r.steps) {
    step.push_back(s.step);
    task_loss.push_back(s.task_loss);
    ms_loss.push_back(s.ms_loss);
    warmup.push_back(s.warmup);
    for (std::size_t h = 0; h < s.tau_star.size() && h < tau.size(); ++h) {
      tau[h].push_back(s.tau_star[h]);
      k_star[h].push_back(s.k_star[h]);
    }
  }
  return json{
      {"arm", r.arm},
      {"lambda", r.lambda},
      {"seed", r.seed},
      {"hooked_layers", r.hooked_layers},
      {"final_train_accuracy", r.final_train_accuracy},
      {"final_eval_accuracy", r.final_eval_accuracy},
      {"final_tau_star", r.final_tau_star},
      {"eval_topk_ms_threshold", r.eval_topk_ms_threshold},
      {"steps",
       {{"step", step},
        {"task_loss", task_loss},
        {"ms_loss", ms_loss},
        {"warmup", warmup},
        {"tau_star", tau},
        {"k_star", k_star}}},
  };
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     std::vector<std::string> columns, std::string hash)
    : file_(path, std::ios::trunc),
      out_(&file_),
      n_columns_(columns.size()),
      columns_(std::move(columns)),
      hash_(std::move(hash)) {
  if (!file_) fail(errc::io_error, "cannot create " + path.string());
  write_header();
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> columns,
                     std::string hash)
    : out_(&out),
      n_columns_(columns.size()),
      columns_(std::move(columns)),
      hash_(std::move(hash)) {
  write_header();
}

void CsvWriter::write_header() {
  for (const std::string& c : columns_) *out_ << c << ',';
  *out_ << "config_hash\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == n_columns_, errc::invalid_argument,
          "CSV row width differs from header");
  for (const std::string& c : cells) *out_ << c << ',';
  *out_ << hash_ << '\n';
}

void CsvWriter::close() {
  out_->flush();
  if (!*out_) fail(errc::io_error, "CSV write failed");
  if (file_.is_open()) file_.close();
}

void write_threshold_csv(const std::filesystem::path& path,
                         const TrainingReport& report, const std::string& hash) {
  CsvWriter csv(path, {"step", "layer", "tau_star", "k_star"}, hash);
  for (const StepRecord& s : report.steps) {
    for (std::size_t h = 0; h < s.tau_star.size(); ++h) {
      csv.row({std::to_string(s.step), std::to_string(report.hooked_layers[h]),
               format_double(s.tau_star[h]), format_double(s.k_star[h])});
    }
  }
  csv.close();
}

}  // namespace l2e
