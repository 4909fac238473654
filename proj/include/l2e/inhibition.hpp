#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace l2e {

/// Loss weights used for Pythia pretraining, kept verbatim for reference.
struct LambdaPreset {
  std::string_view model;
  double lambda;
};
inline constexpr LambdaPreset kPythiaLambdaPresets[] = {
    {"pythia-70m", 1e-11},
    {"pythia-410m", 1e-10},
    {"pythia-2.8b", 1e-9},
};

struct InhibitionConfig {
  double rate = 0.02;
  double lambda = 1e-3;
  double epsilon = 1e-8;
  std::vector<std::size_t> hooked_layers;
  std::size_t warmup_batches = 20;

  /// Throws invalid-argument when a field is out of range for a network of
  /// the given depth.
  void validate(std::size_t depth) const;
};

/// Mean over entries of log((z - mean)^2 + epsilon); 0 for an empty selection.
/// The running mean is a constant here.
double ms_loss(std::span<const double> values, std::span<const double> means,
               double epsilon);

/// d/dz log((z - mean)^2 + epsilon) = 2(z - mean) / ((z - mean)^2 + epsilon).
/// Bounded by 1/sqrt(epsilon) in magnitude.
double ms_loss_grad(double value, double mean, double epsilon);

inline double combined_loss(double task_loss, double ms_loss_value,
                            double lambda) {
  return task_loss + lambda * ms_loss_value;
}

}  // namespace l2e
