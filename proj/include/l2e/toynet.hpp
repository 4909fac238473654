#pragma once

// Small fully connected classifier with manual backpropagation and
// post-activation hooks on its hidden layers. Stands in for a large
// pretraining run when exercising the stats / selector / inhibition pipeline.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l2e/feature_analysis.hpp"
#include "l2e/inhibition.hpp"
#include "l2e/matrix.hpp"
#include "l2e/selector.hpp"
#include "l2e/stats.hpp"

namespace l2e {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct SyntheticFeatureTask {
  std::size_t n_features = 9;
  std::size_t input_dim = 16;
  std::size_t n_samples = 3000;
  double center_scale = 1.0;
  double noise = 0.8;
  std::uint64_t seed = 1;
};

struct LabeledData {
  Matrix x;
  std::vector<FeatureId> labels;
};

struct TaskSplit {
  LabeledData train;
  LabeledData eval;
};

/// Gaussian cluster per feature; labels uniform over features; first 90% of
/// samples form the training split.
TaskSplit generate_task(const SyntheticFeatureTask& cfg);

struct ToyNetConfig {
  std::size_t input_dim = 16;
  std::size_t depth = 6;   // hidden layers
  std::size_t width = 32;  // neurons per hidden layer
  std::size_t n_classes = 9;
  Activation activation = Activation::relu;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
};

struct ForwardResult {
  std::vector<Matrix> pre;   // per hidden layer, before the nonlinearity
  std::vector<Matrix> post;  // per hidden layer, hooked outputs
  Matrix logits;
};

class ToyNet {
 public:
  /// Zero-initialized network of the given shape.
  explicit ToyNet(const ToyNetConfig& cfg);
  /// He-initialized weights, zero biases.
  static ToyNet random(const ToyNetConfig& cfg, std::uint64_t seed);

  const ToyNetConfig& config() const noexcept { return cfg_; }
  std::size_t depth() const noexcept { return cfg_.depth; }
  std::size_t width_of(std::size_t hidden_layer) const {
    return layers_.at(hidden_layer).out;
  }

  /// Hidden layers first, the linear output layer last.
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const;

  ForwardResult forward(const Matrix& batch) const;

  friend bool operator==(const ToyNet& a, const ToyNet& b);

 private:
  ToyNetConfig cfg_;
  std::vector<DenseLayer> layers_;
};

/// Entries of one hooked layer that receive the L_MS penalty.
struct MsPenalty {
  std::size_t layer = 0;
  std::vector<std::uint8_t> mask;  // batch x width
  std::vector<double> means;       // running means, treated as constants
};

struct LossBreakdown {
  double task = 0.0;  // mean cross-entropy
  double ms = 0.0;    // sum over penalized layers of the per-layer ms_loss
  double total = 0.0;
};

struct Gradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

LossBreakdown evaluate_loss(const ToyNet& net, const Matrix& x,
                            std::span<const FeatureId> labels,
                            std::span<const MsPenalty> penalties, double lambda,
                            double epsilon);

/// Loss and full parameter gradient; the penalty means carry no gradient.
std::pair<LossBreakdown, Gradients> loss_and_gradients(
    const ToyNet& net, const Matrix& x, std::span<const FeatureId> labels,
    std::span<const MsPenalty> penalties, double lambda, double epsilon);

double accuracy(const ToyNet& net, const LabeledData& data);

struct TrainConfig {
  std::size_t steps = 1500;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 7;
  bool inhibition_enabled = true;
};

struct StepRecord {
  std::size_t step = 0;
  double task_loss = 0.0;
  double ms_loss = 0.0;
  bool warmup = true;
  std::vector<double> tau_star;  // per hooked layer, after this step
  std::vector<double> k_star;    // per hooked layer; 0 during warm-up
};

/// Mutable training state: network plus per-hooked-layer statistics and
/// thresholds. Statistics accumulate over the whole run.
struct TrainingState {
  ToyNet net;
  InhibitionConfig inhibition;
  std::vector<NeuronStatsBank> banks;
  std::vector<MovingThreshold> thresholds;
  std::size_t step = 0;

  TrainingState(ToyNet net, InhibitionConfig inhibition);
};

/// forward -> update stats and score -> select -> task + lambda * L_MS ->
/// backprop -> gradient descent step. Throws training-diverged on a
/// non-finite loss.
StepRecord train_step(TrainingState& state, const Matrix& x,
                      std::span<const FeatureId> labels, double learning_rate);

struct ExperimentConfig {
  SyntheticFeatureTask task;
  ToyNetConfig net;
  InhibitionConfig inhibition;
  TrainConfig train;
  /// Hook every hidden layer instead of the middle two.
  bool hook_all_layers = false;

  /// Fills empty hooked_layers and ties net dims to the task.
  void materialize();
  void validate() const;
};

/// Middle two hidden layers of a network of the given depth.
std::vector<std::size_t> middle_layers(std::size_t depth);

struct TrainingReport {
  std::string arm;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hooked_layers;
  std::vector<StepRecord> steps;
  double final_train_accuracy = 0.0;
  double final_eval_accuracy = 0.0;
  std::vector<double> final_tau_star;
  /// Exact top-rate MS threshold per hooked layer over the eval split,
  /// computed from the final running statistics.
  std::vector<double> eval_topk_ms_threshold;

  double mean_final_tau() const;
};

/// Trains one arm from scratch.
TrainingReport train_arm(const ExperimentConfig& cfg, const TaskSplit& data,
                         const std::string& arm, double lambda);

/// Baseline (lambda = 0) and L2E arm with identical data, init and batches.
std::pair<TrainingReport, TrainingReport> run_experiment(ExperimentConfig cfg);

}  // namespace l2e
