#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; both evaluate the same per-element expression in the same
// order, so their outputs are bitwise identical regardless of thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace l2e::kernels {

/// When a streamed value is scored: against statistics that already include
/// it (reproduces the batch formula at end of stream) or strictly before it.
enum class score_timing { post_update, causal };

struct ms_guard {
  std::uint64_t min_count = 2;
  double variance_floor = 1e-12;
};

struct bank_view {
  std::span<std::uint64_t> count;
  std::span<double> mean;
  std::span<double> m2;
};

struct ms_view {
  std::span<double> values;
  std::span<std::uint8_t> valid;
};

/// Welford step for one neuron followed by its MS. Shared by both variants.
inline void update_score_one(std::uint64_t& count, double& mean, double& m2,
                             double x, double& ms, std::uint8_t& valid,
                             score_timing timing, ms_guard guard) {
  const std::uint64_t prev_count = count;
  const double prev_mean = mean;
  const double prev_m2 = m2;

  const std::uint64_t n = prev_count + 1;
  const double delta = x - prev_mean;
  const double new_mean = prev_mean + delta / static_cast<double>(n);
  const double new_m2 = prev_m2 + delta * (x - new_mean);
  count = n;
  mean = new_mean;
  m2 = new_m2;

  const std::uint64_t c = timing == score_timing::post_update ? n : prev_count;
  const double mu = timing == score_timing::post_update ? new_mean : prev_mean;
  const double sq = timing == score_timing::post_update ? new_m2 : prev_m2;
  if (c < guard.min_count || c < 2) {
    ms = 0.0;
    valid = 0;
    return;
  }
  const double var = sq / static_cast<double>(c - 1);
  if (!(var >= guard.variance_floor)) {
    ms = 0.0;
    valid = 0;
    return;
  }
  const double dev = x - mu;
  ms = dev * dev / var;
  valid = 1;
}

namespace serial {

void update_and_score(bank_view bank, std::span<const float> x, ms_view out,
                      score_timing timing, ms_guard guard);
void update_and_score(bank_view bank, std::span<const double> x, ms_view out,
                      score_timing timing, ms_guard guard);

/// mask[i] = valid[i] && values[i] >= tau; returns the population count.
std::size_t threshold_mask(std::span<const double> values,
                           std::span<const std::uint8_t> valid, double tau,
                           std::span<std::uint8_t> mask);

/// out[r, o] = bias[o] + sum_i in[r, i] * weight[o, i]   (row-major)
void affine(std::span<const double> in, std::size_t rows, std::size_t in_dim,
            std::span<const double> weight, std::span<const double> bias,
            std::size_t out_dim, std::span<double> out);

}  // namespace serial

namespace omp {

void update_and_score(bank_view bank, std::span<const float> x, ms_view out,
                      score_timing timing, ms_guard guard);
void update_and_score(bank_view bank, std::span<const double> x, ms_view out,
                      score_timing timing, ms_guard guard);
std::size_t threshold_mask(std::span<const double> values,
                           std::span<const std::uint8_t> valid, double tau,
                           std::span<std::uint8_t> mask);
void affine(std::span<const double> in, std::size_t rows, std::size_t in_dim,
            std::span<const double> weight, std::span<const double> bias,
            std::size_t out_dim, std::span<double> out);

}  // namespace omp

/// Caps OpenMP parallelism from the L2E_THREADS environment variable, if set.
void apply_thread_limit_from_env();

}  // namespace l2e::kernels
