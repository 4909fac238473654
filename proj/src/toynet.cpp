#include "l2e/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "l2e/error.hpp"
#include "l2e/kernels.hpp"

namespace l2e {

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  fail(errc::invalid_argument, "unknown activation '" + s + "'");
}

TaskSplit generate_task(const SyntheticFeatureTask& cfg) {
  require(cfg.n_features >= 2, errc::invalid_argument,
          "task needs at least two features");
  require(cfg.input_dim >= cfg.n_features, errc::invalid_argument,
          "input_dim must be >= n_features");
  require(cfg.n_samples >= 10, errc::invalid_argument,
          "task needs at least 10 samples");
  require(cfg.noise >= 0.0 && cfg.center_scale > 0.0, errc::invalid_argument,
          "noise must be >= 0 and center_scale > 0");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<FeatureId> pick(
      0, static_cast<FeatureId>(cfg.n_features - 1));

  Matrix centers(cfg.n_features, cfg.input_dim);
  for (double& c : centers.values) c = cfg.center_scale * gauss(rng);

  const std::size_t n_train = cfg.n_samples * 9 / 10;
  TaskSplit split;
  split.train.x = Matrix(n_train, cfg.input_dim);
  split.eval.x = Matrix(cfg.n_samples - n_train, cfg.input_dim);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    const FeatureId label = pick(rng);
    LabeledData& dst = s < n_train ? split.train : split.eval;
    const std::size_t r = s < n_train ? s : s - n_train;
    for (std::size_t d = 0; d < cfg.input_dim; ++d) {
      dst.x(r, d) = centers(label, d) + cfg.noise * gauss(rng);
    }
    dst.labels.push_back(label);
  }
  return split;
}

ToyNet::ToyNet(const ToyNetConfig& cfg) : cfg_(cfg) {
  require(cfg.depth >= 1 && cfg.width >= 1 && cfg.input_dim >= 1 &&
              cfg.n_classes >= 2,
          errc::invalid_argument, "invalid network shape");
  std::size_t in = cfg.input_dim;
  for (std::size_t l = 0; l <= cfg.depth; ++l) {
    DenseLayer layer;
    layer.in = in;
    layer.out = l < cfg.depth ? cfg.width : cfg.n_classes;
    layer.weight.assign(layer.in * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
    in = layer.out;
    layers_.push_back(std::move(layer));
  }
}

ToyNet ToyNet::random(const ToyNetConfig& cfg, std::uint64_t seed) {
  ToyNet net(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    DenseLayer& layer = net.layers_[l];
    const bool hidden = l < cfg.depth;
    const double gain = hidden && cfg.activation == Activation::relu ? 2.0 : 1.0;
    const double scale = std::sqrt(gain / static_cast<double>(layer.in));
    for (double& w : layer.weight) w = scale * gauss(rng);
  }
  return net;
}

std::size_t ToyNet::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

bool operator==(const ToyNet& a, const ToyNet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight ||
        a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

namespace {

Matrix apply_layer(const DenseLayer& layer, const Matrix& in) {
  Matrix out(in.rows, layer.out);
  kernels::omp::affine(in.values, in.rows, layer.in, layer.weight, layer.bias,
                       layer.out, out.values);
  return out;
}

}  // namespace

ForwardResult ToyNet::forward(const Matrix& batch) const {
  if (batch.cols != cfg_.input_dim) {
    fail(errc::invalid_argument,
         "batch width " + std::to_string(batch.cols) + " != input_dim " +
             std::to_string(cfg_.input_dim));
  }
  ForwardResult r;
  const Matrix* in = &batch;
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    r.pre.push_back(apply_layer(layers_[l], *in));
    Matrix post = r.pre.back();
    if (cfg_.activation == Activation::relu) {
      for (double& v : post.values) v = v < 0.0 ? 0.0 : v;  // NaN passes through
    }
    r.post.push_back(std::move(post));
    in = &r.post.back();
  }
  r.logits = apply_layer(layers_.back(), *in);
  return r;
}

namespace {

// Mean cross-entropy; fills dlogits with d(loss)/d(logits) when given.
double cross_entropy(const Matrix& logits, std::span<const FeatureId> labels,
                     Matrix* dlogits) {
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (const double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[labels[i]];
    if (dlogits != nullptr) {
      for (std::size_t c = 0; c < logits.cols; ++c) {
        const double p = std::exp(row[c] - lse);
        (*dlogits)(i, c) = (p - (c == labels[i] ? 1.0 : 0.0)) * inv_b;
      }
    }
  }
  return loss * inv_b;
}

void check_penalties(const ToyNet& net, const Matrix& x,
                     std::span<const MsPenalty> penalties) {
  for (const MsPenalty& p : penalties) {
    require(p.layer < net.depth(), errc::invalid_argument,
            "penalty on a layer beyond depth");
    const std::size_t w = net.width_of(p.layer);
    require(p.mask.size() == x.rows * w && p.means.size() == w,
            errc::invalid_argument, "penalty shape mismatch");
  }
}

// Per-layer ms_loss over masked entries; accumulates its gradient into dpost.
double penalty_term(const MsPenalty& p, const Matrix& post, double scale,
                    double epsilon, Matrix* dpost) {
  std::size_t selected = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < post.rows; ++i) {
    for (std::size_t j = 0; j < post.cols; ++j) {
      if (p.mask[i * post.cols + j] == 0) continue;
      const double u = post(i, j) - p.means[j];
      sum += std::log(u * u + epsilon);
      ++selected;
    }
  }
  if (selected == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(selected);
  if (dpost != nullptr && scale != 0.0) {
    for (std::size_t i = 0; i < post.rows; ++i) {
      for (std::size_t j = 0; j < post.cols; ++j) {
        if (p.mask[i * post.cols + j] == 0) continue;
        (*dpost)(i, j) +=
            scale * inv * ms_loss_grad(post(i, j), p.means[j], epsilon);
      }
    }
  }
  return sum * inv;
}

}  // namespace

LossBreakdown evaluate_loss(const ToyNet& net, const Matrix& x,
                            std::span<const FeatureId> labels,
                            std::span<const MsPenalty> penalties, double lambda,
                            double epsilon) {
  require(labels.size() == x.rows, errc::invalid_argument,
          "one label per row required");
  check_penalties(net, x, penalties);
  const ForwardResult fwd = net.forward(x);
  LossBreakdown out;
  out.task = cross_entropy(fwd.logits, labels, nullptr);
  for (const MsPenalty& p : penalties) {
    out.ms += penalty_term(p, fwd.post[p.layer], 0.0, epsilon, nullptr);
  }
  out.total = combined_loss(out.task, out.ms, lambda);
  return out;
}

std::pair<LossBreakdown, Gradients> loss_and_gradients(
    const ToyNet& net, const Matrix& x, std::span<const FeatureId> labels,
    std::span<const MsPenalty> penalties, double lambda, double epsilon) {
  require(labels.size() == x.rows, errc::invalid_argument,
          "one label per row required");
  check_penalties(net, x, penalties);
  const ForwardResult fwd = net.forward(x);
  const auto& layers = net.layers();
  const std::size_t depth = net.depth();

  LossBreakdown loss;
  Matrix delta(fwd.logits.rows, fwd.logits.cols);
  loss.task = cross_entropy(fwd.logits, labels, &delta);

  std::vector<Matrix> dpost;
  dpost.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    dpost.emplace_back(x.rows, layers[l].out);
  }
  for (const MsPenalty& p : penalties) {
    loss.ms += penalty_term(p, fwd.post[p.layer], lambda, epsilon,
                            &dpost[p.layer]);
  }
  loss.total = combined_loss(loss.task, loss.ms, lambda);

  Gradients g;
  g.weight.resize(layers.size());
  g.bias.resize(layers.size());

  // delta holds d(loss)/d(output of layer l) before the nonlinearity
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const Matrix& input = l == 0 ? x : fwd.post[l - 1];
    std::vector<double>& gw = g.weight[l];
    std::vector<double>& gb = g.bias[l];
    gw.assign(layer.weight.size(), 0.0);
    gb.assign(layer.out, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta(i, o);
        if (d == 0.0) continue;
        gb[o] += d;
        double* gw_row = gw.data() + o * layer.in;
        for (std::size_t k = 0; k < layer.in; ++k) gw_row[k] += d * input(i, k);
      }
    }
    if (l == 0) break;

    // propagate to the hooked output of layer l - 1, then through its nonlinearity
    Matrix next = dpost[l - 1];
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta(i, o);
        if (d == 0.0) continue;
        const double* w_row = layer.weight.data() + o * layer.in;
        for (std::size_t k = 0; k < layer.in; ++k) next(i, k) += d * w_row[k];
      }
    }
    if (net.config().activation == Activation::relu) {
      const Matrix& pre = fwd.pre[l - 1];
      for (std::size_t idx = 0; idx < next.values.size(); ++idx) {
        if (!(pre.values[idx] > 0.0)) next.values[idx] = 0.0;
      }
    }
    delta = std::move(next);
  }
  return {loss, std::move(g)};
}

double accuracy(const ToyNet& net, const LabeledData& data) {
  if (data.labels.empty()) return 0.0;
  const ForwardResult fwd = net.forward(data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < fwd.logits.rows; ++i) {
    const auto row = fwd.logits.row(i);
    const auto best = static_cast<FeatureId>(
        std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.labels.size());
}

TrainingState::TrainingState(ToyNet n, InhibitionConfig inh)
    : net(std::move(n)), inhibition(std::move(inh)) {
  inhibition.validate(net.depth());
}

StepRecord train_step(TrainingState& state, const Matrix& x,
                      std::span<const FeatureId> labels, double learning_rate) {
  require(labels.size() == x.rows && x.rows > 0, errc::invalid_argument,
          "one label per row required");
  const InhibitionConfig& inh = state.inhibition;
  const ForwardResult fwd = state.net.forward(x);

  if (state.banks.empty()) {
    for (const std::size_t layer : inh.hooked_layers) {
      const std::size_t width = state.net.width_of(layer);
      const std::size_t entries = x.rows * width;
      state.banks.emplace_back(width);
      state.thresholds.emplace_back(entries, target_count(inh.rate, entries),
                                    inh.warmup_batches);
    }
  }

  StepRecord rec;
  rec.step = state.step;
  rec.warmup = false;
  std::vector<MsPenalty> penalties;
  for (std::size_t h = 0; h < inh.hooked_layers.size(); ++h) {
    const std::size_t layer = inh.hooked_layers[h];
    const Matrix& post = fwd.post[layer];
    NeuronStatsBank& bank = state.banks[h];
    MovingThreshold& thr = state.thresholds[h];
    require(post.values.size() == thr.n_neurons(), errc::invalid_argument,
            "batch size changed during training");

    MSVector ms(post.values.size());
    for (std::size_t i = 0; i < post.rows; ++i) {
      bank.update_and_score_into(
          post.row(i), std::span(ms.values).subspan(i * post.cols, post.cols),
          std::span(ms.valid).subspan(i * post.cols, post.cols));
    }

    if (thr.warming_up()) {
      rec.warmup = true;
      // a batch without enough scorable entries does not count toward warm-up
      if (ms.valid_count() >= thr.k_target()) thr.warmup_observe(ms);
      rec.k_star.push_back(0.0);
    } else {
      MsPenalty p;
      p.layer = layer;
      p.mask.assign(ms.size(), 0);
      rec.k_star.push_back(thr.select_into(ms, p.mask));
      p.means.assign(bank.means().begin(), bank.means().end());
      if (inh.lambda > 0.0) penalties.push_back(std::move(p));
    }
    rec.tau_star.push_back(thr.tau_star());
  }

  auto [loss, grads] = loss_and_gradients(state.net, x, labels, penalties,
                                          inh.lambda, inh.epsilon);
  if (!std::isfinite(loss.total)) {
    fail(errc::training_diverged,
         "non-finite loss at step " + std::to_string(state.step));
  }
  rec.task_loss = loss.task;
  rec.ms_loss = loss.ms;

  auto& layers = state.net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t k = 0; k < layers[l].weight.size(); ++k) {
      layers[l].weight[k] -= learning_rate * grads.weight[l][k];
    }
    for (std::size_t k = 0; k < layers[l].bias.size(); ++k) {
      layers[l].bias[k] -= learning_rate * grads.bias[l][k];
    }
  }
  ++state.step;
  return rec;
}

std::vector<std::size_t> middle_layers(std::size_t depth) {
  require(depth >= 1, errc::invalid_argument, "depth must be >= 1");
  if (depth == 1) return {0};
  return {depth / 2 - 1, depth / 2};
}

void ExperimentConfig::materialize() {
  net.input_dim = task.input_dim;
  net.n_classes = task.n_features;
  if (inhibition.hooked_layers.empty()) {
    if (hook_all_layers) {
      inhibition.hooked_layers.resize(net.depth);
      std::iota(inhibition.hooked_layers.begin(),
                inhibition.hooked_layers.end(), std::size_t{0});
    } else {
      inhibition.hooked_layers = middle_layers(net.depth);
    }
  }
}

void ExperimentConfig::validate() const {
  inhibition.validate(net.depth);
  require(train.steps >= 1 && train.batch_size >= 1, errc::invalid_argument,
          "steps and batch_size must be >= 1");
  require(train.learning_rate > 0.0, errc::invalid_argument,
          "learning_rate must be > 0");
  require(net.input_dim == task.input_dim && net.n_classes == task.n_features,
          errc::invalid_argument, "network shape does not match the task");
}

double TrainingReport::mean_final_tau() const {
  if (final_tau_star.empty()) return 0.0;
  return std::accumulate(final_tau_star.begin(), final_tau_star.end(), 0.0) /
         static_cast<double>(final_tau_star.size());
}

namespace {

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(src.row(idx[r]).begin(), src.row(idx[r]).end(),
              out.row(r).begin());
  }
  return out;
}

}  // namespace

TrainingReport train_arm(const ExperimentConfig& cfg, const TaskSplit& data,
                         const std::string& arm, double lambda) {
  cfg.validate();
  const std::size_t n_train = data.train.labels.size();
  require(n_train >= cfg.train.batch_size, errc::invalid_argument,
          "training split smaller than one batch");

  InhibitionConfig inh = cfg.inhibition;
  inh.lambda = lambda;
  TrainingState state(ToyNet::random(cfg.net, cfg.train.seed), inh);

  TrainingReport report;
  report.arm = arm;
  report.lambda = lambda;
  report.seed = cfg.train.seed;
  report.hooked_layers = inh.hooked_layers;

  std::mt19937_64 order_rng(cfg.train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n_train;
  std::vector<std::size_t> idx(cfg.train.batch_size);
  std::vector<FeatureId> batch_labels(cfg.train.batch_size);

  for (std::size_t s = 0; s < cfg.train.steps; ++s) {
    if (cursor + cfg.train.batch_size > n_train) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    for (std::size_t b = 0; b < cfg.train.batch_size; ++b) {
      idx[b] = order[cursor + b];
      batch_labels[b] = data.train.labels[idx[b]];
    }
    cursor += cfg.train.batch_size;
    const Matrix x = gather_rows(data.train.x, idx);
    if (cfg.train.inhibition_enabled) {
      report.steps.push_back(
          train_step(state, x, batch_labels, cfg.train.learning_rate));
    } else {
      auto [loss, grads] =
          loss_and_gradients(state.net, x, batch_labels, {}, 0.0, inh.epsilon);
      if (!std::isfinite(loss.total)) {
        fail(errc::training_diverged, "non-finite loss");
      }
      auto& layers = state.net.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t k = 0; k < layers[l].weight.size(); ++k) {
          layers[l].weight[k] -= cfg.train.learning_rate * grads.weight[l][k];
        }
        for (std::size_t k = 0; k < layers[l].bias.size(); ++k) {
          layers[l].bias[k] -= cfg.train.learning_rate * grads.bias[l][k];
        }
      }
      StepRecord rec;
      rec.step = s;
      rec.task_loss = loss.task;
      report.steps.push_back(rec);
    }
  }

  report.final_train_accuracy = accuracy(state.net, data.train);
  report.final_eval_accuracy = accuracy(state.net, data.eval);
  for (const MovingThreshold& t : state.thresholds) {
    report.final_tau_star.push_back(t.tau_star());
  }

  if (!state.banks.empty() && !data.eval.labels.empty()) {
    const ForwardResult fwd = state.net.forward(data.eval.x);
    for (std::size_t h = 0; h < inh.hooked_layers.size(); ++h) {
      const Matrix& post = fwd.post[inh.hooked_layers[h]];
      const NeuronStatsBank& bank = state.banks[h];
      std::vector<double> scores;
      scores.reserve(post.values.size());
      for (std::size_t i = 0; i < post.rows; ++i) {
        for (std::size_t j = 0; j < post.cols; ++j) {
          if (bank.count(j) < kMinCount) continue;
          const double var = bank.variance(j);
          if (!(var >= kVarianceFloor)) continue;
          const double d = post(i, j) - bank.mean(j);
          scores.push_back(d * d / var);
        }
      }
      report.eval_topk_ms_threshold.push_back(
          scores.empty() ? 0.0
                         : kth_largest(scores, target_count(inh.rate, scores.size())));
    }
  }
  return report;
}

std::pair<TrainingReport, TrainingReport> run_experiment(ExperimentConfig cfg) {
  cfg.materialize();
  cfg.validate();
  const TaskSplit data = generate_task(cfg.task);
  TrainingReport baseline = train_arm(cfg, data, "baseline", 0.0);
  TrainingReport l2e = train_arm(cfg, data, "l2e", cfg.inhibition.lambda);
  return {std::move(baseline), std::move(l2e)};
}

}  // namespace l2e
