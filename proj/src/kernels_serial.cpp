#include "l2e/kernels.hpp"

namespace l2e::kernels::serial {

namespace {

template <class T>
void update_and_score_impl(bank_view bank, std::span<const T> x, ms_view out,
                           score_timing timing, ms_guard guard) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    update_score_one(bank.count[i], bank.mean[i], bank.m2[i],
                     static_cast<double>(x[i]), out.values[i], out.valid[i],
                     timing, guard);
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
  std::size_t selected = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint8_t hit = (valid[i] != 0 && values[i] >= tau) ? 1 : 0;
    mask[i] = hit;
    selected += hit;
  }
  return selected;
}

void affine(std::span<const double> in, std::size_t rows, std::size_t in_dim,
            std::span<const double> weight, std::span<const double> bias,
            std::size_t out_dim, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* w = weight.data() + o * in_dim;
      double acc = bias[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += x[i] * w[i];
      out[r * out_dim + o] = acc;
    }
  }
}

}  // namespace l2e::kernels::serial
