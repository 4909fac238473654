#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace l2e {

using FeatureId = std::uint32_t;

/// Labeled activations: one label per input, plus the id -> name table.
struct FeatureDataset {
  std::vector<FeatureId> labels;
  std::vector<std::string> feature_names;

  std::size_t n_features() const noexcept { return feature_names.size(); }
  /// Throws validation-error if any label is out of range.
  void validate() const;
};

struct FeaturePartitionReport {
  FeatureId feature = 0;
  double phi_l = 0.0;        // mean MS over inputs of the feature
  double phi_l_minus = 0.0;  // mean MS over all other inputs
  std::size_t count_l = 0;
  std::size_t count_l_minus = 0;
};

FeaturePartitionReport partition_means(std::span<const double> ms,
                                       std::span<const FeatureId> labels,
                                       FeatureId feature);

struct MonoFeature {
  FeatureId feature = 0;
  double mean_ms = 0.0;
};

/// Feature with the highest mean MS over its inputs. Ties go to the smallest
/// id; ids that never occur in labels are skipped.
MonoFeature relatively_mono_feature(std::span<const double> ms,
                                    std::span<const FeatureId> labels);

/// Two-sample Kolmogorov-Smirnov statistic D = sup |F_a - F_b| over the
/// empirical CDFs, computed exactly by merging the sorted samples.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// D between a neuron's MS on its relatively monosemantic feature and its
/// MS over all inputs.
double neuron_ks(std::span<const double> ms, std::span<const FeatureId> labels);

/// One model scale: MS of every sampled neuron over a shared labeled input
/// set. ms[j] holds neuron j's per-input MS.
struct ScaleSamples {
  std::string name;
  std::vector<std::vector<double>> ms;
  std::vector<FeatureId> labels;
};

struct ScaleKsResult {
  std::string name;
  std::size_t n_neurons = 0;
  /// D between the pooled ell*-conditioned MS set and the pooled universal set.
  double d_pooled = 0.0;
  /// Mean of the per-neuron D values.
  double d_neuron_mean = 0.0;
};

std::vector<ScaleKsResult> scale_ks_scan(std::span<const ScaleSamples> scales);

/// F1 of the best single-threshold classifier for "label == feature".
/// Candidate thresholds are the midpoints between consecutive distinct values
/// plus "everything positive"; both polarities (above / below) are tried.
double mean_diff_probe(std::span<const double> values,
                       std::span<const FeatureId> labels, FeatureId feature);
double mean_diff_probe(std::span<const float> values,
                       std::span<const FeatureId> labels, FeatureId feature);

}  // namespace l2e
