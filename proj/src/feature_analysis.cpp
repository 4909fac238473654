#include "l2e/feature_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "l2e/error.hpp"

namespace l2e {

void FeatureDataset::validate() const {
  require(!feature_names.empty(), errc::validation_error,
          "dataset has no features");
  for (const FeatureId id : labels) {
    if (id >= feature_names.size()) {
      fail(errc::validation_error,
           "label id " + std::to_string(id) + " out of range");
    }
  }
}

FeaturePartitionReport partition_means(std::span<const double> ms,
                                       std::span<const FeatureId> labels,
                                       FeatureId feature) {
  require(ms.size() == labels.size(), errc::invalid_argument,
          "ms and labels differ in length");
  FeaturePartitionReport r;
  r.feature = feature;
  double in_sum = 0.0;
  double out_sum = 0.0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (labels[i] == feature) {
      in_sum += ms[i];
      ++r.count_l;
    } else {
      out_sum += ms[i];
      ++r.count_l_minus;
    }
  }
  if (r.count_l == 0) {
    fail(errc::missing_feature,
         "feature " + std::to_string(feature) + " has no samples");
  }
  require(r.count_l_minus > 0, errc::empty_complement,
          "every sample belongs to the feature");
  r.phi_l = in_sum / static_cast<double>(r.count_l);
  r.phi_l_minus = out_sum / static_cast<double>(r.count_l_minus);
  return r;
}

MonoFeature relatively_mono_feature(std::span<const double> ms,
                                    std::span<const FeatureId> labels) {
  require(!ms.empty(), errc::invalid_argument, "no samples");
  require(ms.size() == labels.size(), errc::invalid_argument,
          "ms and labels differ in length");
  const FeatureId max_id = *std::max_element(labels.begin(), labels.end());
  std::vector<double> sums(static_cast<std::size_t>(max_id) + 1, 0.0);
  std::vector<std::size_t> counts(sums.size(), 0);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    sums[labels[i]] += ms[i];
    ++counts[labels[i]];
  }
  MonoFeature best;
  bool found = false;
  for (std::size_t id = 0; id < sums.size(); ++id) {
    if (counts[id] == 0) continue;
    const double m = sums[id] / static_cast<double>(counts[id]);
    if (!found || m > best.mean_ms) {
      best = {static_cast<FeatureId>(id), m};
      found = true;
    }
  }
  return best;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), errc::invalid_argument,
          "K-S statistic needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= x) ++i;
    while (j < sb.size() && sb[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

double neuron_ks(std::span<const double> ms, std::span<const FeatureId> labels) {
  const MonoFeature star = relatively_mono_feature(ms, labels);
  std::vector<double> conditioned;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (labels[i] == star.feature) conditioned.push_back(ms[i]);
  }
  return ks_statistic(conditioned, ms);
}

std::vector<ScaleKsResult> scale_ks_scan(std::span<const ScaleSamples> scales) {
  std::vector<ScaleKsResult> out;
  out.reserve(scales.size());
  for (const ScaleSamples& s : scales) {
    require(!s.ms.empty(), errc::invalid_argument, "scale has no neurons");
    std::map<FeatureId, std::size_t> per_feature;
    for (const FeatureId id : s.labels) ++per_feature[id];
    require(per_feature.size() >= 2, errc::invalid_argument,
            "each scale needs at least two features");
    for (const auto& [id, n] : per_feature) {
      require(n >= 2, errc::invalid_argument,
              "each feature needs at least two samples");
    }

    std::vector<double> pooled_star;
    std::vector<double> pooled_all;
    double d_sum = 0.0;
    for (const std::vector<double>& neuron : s.ms) {
      require(neuron.size() == s.labels.size(), errc::invalid_argument,
              "neuron MS length differs from label count");
      const MonoFeature star = relatively_mono_feature(neuron, s.labels);
      std::vector<double> conditioned;
      for (std::size_t i = 0; i < neuron.size(); ++i) {
        if (s.labels[i] == star.feature) conditioned.push_back(neuron[i]);
      }
      d_sum += ks_statistic(conditioned, neuron);
      pooled_star.insert(pooled_star.end(), conditioned.begin(),
                         conditioned.end());
      pooled_all.insert(pooled_all.end(), neuron.begin(), neuron.end());
    }
    ScaleKsResult r;
    r.name = s.name;
    r.n_neurons = s.ms.size();
    r.d_pooled = ks_statistic(pooled_star, pooled_all);
    r.d_neuron_mean = d_sum / static_cast<double>(s.ms.size());
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) /
         static_cast<double>(2 * tp + fp + fn);
}

template <class T>
double mean_diff_probe_impl(std::span<const T> values,
                            std::span<const FeatureId> labels,
                            FeatureId feature) {
  require(values.size() == labels.size(), errc::invalid_argument,
          "values and labels differ in length");
  require(values.size() >= 2, errc::invalid_argument,
          "probe needs at least two samples");
  std::vector<std::pair<double, bool>> rows(values.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool pos = labels[i] == feature;
    rows[i] = {static_cast<double>(values[i]), pos};
    positives += pos ? 1 : 0;
  }
  require(positives > 0, errc::missing_feature,
          "feature absent from labels");
  std::sort(rows.begin(), rows.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });

  const std::size_t n = rows.size();
  const std::size_t negatives = n - positives;
  // all-positive classifier
  double best = f1(positives, negatives, 0);
  // prefix = samples strictly below the cut
  std::size_t pre_pos = 0;
  std::size_t pre_neg = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (rows[i].second) ++pre_pos; else ++pre_neg;
    if (rows[i].first == rows[i + 1].first) continue;
    // above the cut predicted positive
    const std::size_t tp_hi = positives - pre_pos;
    best = std::max(best, f1(tp_hi, negatives - pre_neg, pre_pos));
    // below the cut predicted positive
    best = std::max(best, f1(pre_pos, pre_neg, positives - pre_pos));
  }
  return best;
}

}  // namespace

double mean_diff_probe(std::span<const double> values,
                       std::span<const FeatureId> labels, FeatureId feature) {
  return mean_diff_probe_impl(values, labels, feature);
}

double mean_diff_probe(std::span<const float> values,
                       std::span<const FeatureId> labels, FeatureId feature) {
  return mean_diff_probe_impl(values, labels, feature);
}

}  // namespace l2e
