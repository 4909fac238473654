#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "l2e/feature_analysis.hpp"
#include "l2e/matrix.hpp"
#include "l2e/stats.hpp"

namespace l2e {

/// k-th largest element (1-based, duplicates counted). Randomized
/// three-way quickselect, expected linear time.
double kth_largest(std::span<const double> values, std::size_t k);

/// Target selection count for a fraction of n items: round(rate * n), at least 1.
std::size_t target_count(double rate, std::size_t n);

/// Per-layer moving threshold tau*. The first warmup batches record the exact
/// k-th largest MS; tau* starts at their mean. Every later batch selects the
/// entries with MS >= tau* and then applies tau* += (k* - k) / N.
///
/// A batch may hold several rows of N entries (one row per input). Then the
/// warm-up ranks the k * rows largest entries of the batch and k* is the mean
/// number of selected entries per row, so N and k stay per-layer quantities.
class MovingThreshold {
 public:
  MovingThreshold(std::size_t n_neurons, std::size_t k_target,
                  std::size_t warmup_batches, double initial_tau = 0.0);

  std::size_t n_neurons() const noexcept { return n_neurons_; }
  std::size_t k_target() const noexcept { return k_target_; }
  double tau_star() const noexcept { return tau_star_; }
  std::size_t warmup_remaining() const noexcept { return warmup_remaining_; }
  double warmup_accumulator() const noexcept { return warmup_mean_; }
  double last_k_star() const noexcept { return last_k_star_; }
  bool warming_up() const noexcept { return warmup_remaining_ > 0; }

  void warmup_observe(const MSVector& ms);

  /// Writes the selection mask for ms (pre-update tau*) and applies the
  /// feedback step. Returns k* for this batch.
  double select_into(const MSVector& ms, std::span<std::uint8_t> mask);
  double select_into_serial(const MSVector& ms, std::span<std::uint8_t> mask);
  std::vector<std::uint8_t> select(const MSVector& ms);

 private:
  std::size_t rows_of(const MSVector& ms) const;
  double apply_feedback(std::size_t selected, std::size_t rows);

  std::size_t n_neurons_;
  std::size_t k_target_;
  std::size_t warmup_remaining_;
  std::size_t warmup_seen_ = 0;
  double warmup_mean_ = 0.0;
  double tau_star_;
  double last_k_star_ = 0.0;
};

/// Exact top-k: every valid entry with MS >= the k-th largest valid MS.
/// Ties at the threshold are all included, so the mask may exceed k.
std::vector<std::uint8_t> exact_topk_mask(const MSVector& ms, std::size_t k);

/// Inputs x neurons matrix of MS values.
using MsMatrix = Matrix;

struct FkrReport {
  double rate = 0.0;
  std::size_t k = 0;      // selections targeted over all entries
  double tau_k = 0.0;     // k-th largest MS over all (input, neuron) entries
  std::size_t inhibitions = 0;
  std::size_t false_kills = 0;
  double fkr = 0.0;
};

/// False Killing Rate with one global threshold over every entry of the
/// matrix; k = round(rate * rows * cols).
FkrReport fkr(const MsMatrix& ms, std::span<const FeatureId> labels,
              std::span<const FeatureId> mono_features, double rate);

/// fkr at every rate; rates must be non-decreasing and within (0, 1].
std::vector<FkrReport> fkr_curve(const MsMatrix& ms,
                                 std::span<const FeatureId> labels,
                                 std::span<const FeatureId> mono_features,
                                 std::span<const double> rates);

/// Relatively monosemantic feature of every column of ms.
std::vector<FeatureId> mono_features_of(const MsMatrix& ms,
                                        std::span<const FeatureId> labels);

struct BenchRow {
  std::string strategy;
  std::size_t n_neurons = 0;
  double rate = 0.0;
  std::size_t batches = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double mean_k_star = 0.0;
};

struct BenchOptions {
  std::size_t n_neurons = 1'048'576;
  double rate = 0.02;
  std::size_t batches = 100;
  std::uint64_t seed = 0;
  std::size_t warmup_batches = 20;
  std::size_t distinct_batches = 4;
};

/// Times moving-threshold, full-sort and bounded-heap top-k selection on
/// identical streams of MS vectors.
std::vector<BenchRow> bench_selection(const BenchOptions& opts);

}  // namespace l2e
