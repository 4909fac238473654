#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "l2e/kernels.hpp"

namespace l2e {

using kernels::score_timing;

inline constexpr std::uint64_t kMinCount = 2;
inline constexpr double kVarianceFloor = 1e-12;

/// Per-neuron MS of one observation vector (or a row-major batch of them).
/// Invalid entries have value 0 and are never selected.
struct MSVector {
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  MSVector() = default;
  explicit MSVector(std::size_t n) : values(n, 0.0), valid(n, 0) {}

  std::size_t size() const noexcept { return values.size(); }
  std::size_t valid_count() const noexcept;
};

/// Running count / mean / sum of squared deviations for every neuron of a
/// layer. Statistics are cumulative for the lifetime of the bank; nothing
/// ever resets them.
class NeuronStatsBank {
 public:
  explicit NeuronStatsBank(std::size_t n_neurons);

  std::size_t size() const noexcept { return mean_.size(); }

  std::uint64_t count(std::size_t j) const { return count_[j]; }
  double mean(std::size_t j) const { return mean_[j]; }
  double m2(std::size_t j) const { return m2_[j]; }
  /// Sample variance (n - 1 denominator); requires count >= 2.
  double variance(std::size_t j) const;

  std::span<const std::uint64_t> counts() const noexcept { return count_; }
  std::span<const double> means() const noexcept { return mean_; }
  std::span<const double> m2s() const noexcept { return m2_; }

  /// Folds one full activation vector into the bank and scores it.
  /// Uses the OpenMP kernel; update_and_score_serial is the reference.
  MSVector update_and_score(std::span<const float> activations,
                            score_timing timing = score_timing::post_update);
  MSVector update_and_score(std::span<const double> activations,
                            score_timing timing = score_timing::post_update);
  MSVector update_and_score_serial(
      std::span<const double> activations,
      score_timing timing = score_timing::post_update);

  /// Writes into an existing MSVector slice (used for batched rows).
  void update_and_score_into(std::span<const double> activations,
                             std::span<double> ms, std::span<std::uint8_t> valid,
                             score_timing timing = score_timing::post_update);

  /// Scores a value against the current statistics without updating them.
  double score(std::size_t j, double value) const;

  friend NeuronStatsBank merge_banks(const NeuronStatsBank& a,
                                     const NeuronStatsBank& b);

 private:
  kernels::bank_view view() noexcept { return {count_, mean_, m2_}; }
  void check_width(std::size_t n) const;

  std::vector<std::uint64_t> count_;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Equivalent to create_bank: throws invalid-argument for zero neurons.
NeuronStatsBank create_bank(std::size_t n_neurons);

/// Statistics of the concatenation of the two streams each bank observed.
NeuronStatsBank merge_banks(const NeuronStatsBank& a, const NeuronStatsBank& b);

/// Batch MS of every sample: (z - mean)^2 / S^2 over the full list.
/// Throws degenerate-neuron for fewer than 2 samples or variance below floor.
std::vector<double> retrospective_ms(std::span<const double> values);
std::vector<double> retrospective_ms(std::span<const float> values);

}  // namespace l2e
