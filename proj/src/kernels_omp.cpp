#include <omp.h>

#include <cstdlib>
#include <string>

#include "l2e/kernels.hpp"

namespace l2e::kernels {

namespace omp {

namespace {

// below this many elements a parallel region costs more than it saves
constexpr std::ptrdiff_t kParallelMin = 4096;

template <class T>
void update_and_score_impl(bank_view bank, std::span<const T> x, ms_view out,
                           score_timing timing, ms_guard guard) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::uint64_t* count = bank.count.data();
  double* mean = bank.mean.data();
  double* m2 = bank.m2.data();
  double* values = out.values.data();
  std::uint8_t* valid = out.valid.data();
#pragma omp parallel for schedule(static) if (n >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    update_score_one(count[i], mean[i], m2[i], static_cast<double>(x[i]),
                     values[i], valid[i], timing, guard);
  }
}

}  // namespace

void update_and_score(bank_view bank, std::span<const float> x, ms_view out,
                      score_timing timing, ms_guard guard) {
  update_and_score_impl(bank, x, out, timing, guard);
}

void update_and_score(bank_view bank, std::span<const double> x, ms_view out,
                      score_timing timing, ms_guard guard) {
  update_and_score_impl(bank, x, out, timing, guard);
}

std::size_t threshold_mask(std::span<const double> values,
                           std::span<const std::uint8_t> valid, double tau,
                           std::span<std::uint8_t> mask) {
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const double* v = values.data();
  const std::uint8_t* ok = valid.data();
  std::uint8_t* m = mask.data();
  std::size_t selected = 0;
#pragma omp parallel for schedule(static) reduction(+ : selected) if (n >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::uint8_t hit = (ok[i] != 0 && v[i] >= tau) ? 1 : 0;
    m[i] = hit;
    selected += hit;
  }
  return selected;
}

void affine(std::span<const double> in, std::size_t rows, std::size_t in_dim,
            std::span<const double> weight, std::span<const double> bias,
            std::size_t out_dim, std::span<double> out) {
  const auto total = static_cast<std::ptrdiff_t>(rows * out_dim);
  // one output element per iteration; the inner sum order matches serial
#pragma omp parallel for schedule(static) if (total >= kParallelMin)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t r = static_cast<std::size_t>(idx) / out_dim;
    const std::size_t o = static_cast<std::size_t>(idx) % out_dim;
    const double* x = in.data() + r * in_dim;
    const double* w = weight.data() + o * in_dim;
    double acc = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += x[i] * w[i];
    out[static_cast<std::size_t>(idx)] = acc;
  }
}

}  // namespace omp

void apply_thread_limit_from_env() {
  const char* env = std::getenv("L2E_THREADS");
  if (env == nullptr || *env == '\0') return;
  try {
    const int n = std::stoi(env);
    if (n >= 1) omp_set_num_threads(n);
  } catch (const std::exception&) {
    // ignored: an unparsable cap leaves the OpenMP default in place
  }
}

}  // namespace l2e::kernels
