#include "l2e/stats.hpp"

#include <algorithm>
#include <string>

#include "l2e/error.hpp"

namespace l2e {

std::size_t MSVector::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

NeuronStatsBank::NeuronStatsBank(std::size_t n_neurons) {
  require(n_neurons >= 1, errc::invalid_argument,
          "a stats bank needs at least one neuron");
  count_.assign(n_neurons, 0);
  mean_.assign(n_neurons, 0.0);
  m2_.assign(n_neurons, 0.0);
}

NeuronStatsBank create_bank(std::size_t n_neurons) {
  return NeuronStatsBank(n_neurons);
}

double NeuronStatsBank::variance(std::size_t j) const {
  require(count_[j] >= 2, errc::degenerate_neuron,
          "sample variance needs at least two observations");
  return m2_[j] / static_cast<double>(count_[j] - 1);
}

void NeuronStatsBank::check_width(std::size_t n) const {
  if (n != size()) {
    fail(errc::invalid_argument,
         "activation vector has " + std::to_string(n) + " entries, bank has " +
             std::to_string(size()));
  }
}

MSVector NeuronStatsBank::update_and_score(std::span<const float> activations,
                                           score_timing timing) {
  check_width(activations.size());
  MSVector out(size());
  kernels::omp::update_and_score(view(), activations, {out.values, out.valid},
                                 timing, {kMinCount, kVarianceFloor});
  return out;
}

MSVector NeuronStatsBank::update_and_score(std::span<const double> activations,
                                           score_timing timing) {
  check_width(activations.size());
  MSVector out(size());
  kernels::omp::update_and_score(view(), activations, {out.values, out.valid},
                                 timing, {kMinCount, kVarianceFloor});
  return out;
}

MSVector NeuronStatsBank::update_and_score_serial(
    std::span<const double> activations, score_timing timing) {
  check_width(activations.size());
  MSVector out(size());
  kernels::serial::update_and_score(view(), activations,
                                    {out.values, out.valid}, timing,
                                    {kMinCount, kVarianceFloor});
  return out;
}

void NeuronStatsBank::update_and_score_into(std::span<const double> activations,
                                            std::span<double> ms,
                                            std::span<std::uint8_t> valid,
                                            score_timing timing) {
  check_width(activations.size());
  require(ms.size() == size() && valid.size() == size(),
          errc::invalid_argument, "output slice width mismatch");
  kernels::omp::update_and_score(view(), activations, {ms, valid}, timing,
                                 {kMinCount, kVarianceFloor});
}

double NeuronStatsBank::score(std::size_t j, double value) const {
  const double var = variance(j);
  require(var >= kVarianceFloor, errc::degenerate_neuron,
          "variance below floor");
  const double dev = value - mean_[j];
  return dev * dev / var;
}

NeuronStatsBank merge_banks(const NeuronStatsBank& a, const NeuronStatsBank& b) {
  require(a.size() == b.size(), errc::invalid_argument,
          "cannot merge banks of different widths");
  NeuronStatsBank out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    const std::uint64_t na = a.count_[j];
    const std::uint64_t nb = b.count_[j];
    if (nb == 0) {
      out.count_[j] = na;
      out.mean_[j] = a.mean_[j];
      out.m2_[j] = a.m2_[j];
      continue;
    }
    if (na == 0) {
      out.count_[j] = nb;
      out.mean_[j] = b.mean_[j];
      out.m2_[j] = b.m2_[j];
      continue;
    }
    // Chan et al. pairwise combination
    const std::uint64_t n = na + nb;
    const double delta = b.mean_[j] - a.mean_[j];
    const double fa = static_cast<double>(na);
    const double fb = static_cast<double>(nb);
    const double fn = static_cast<double>(n);
    out.count_[j] = n;
    out.mean_[j] = a.mean_[j] + delta * (fb / fn);
    out.m2_[j] = a.m2_[j] + b.m2_[j] + delta * delta * (fa * fb / fn);
  }
  return out;
}

namespace {

template <class T>
std::vector<double> retrospective_ms_impl(std::span<const T> values) {
  const std::size_t n = values.size();
  require(n >= 2, errc::degenerate_neuron,
          "MS needs at least two samples");
  double sum = 0.0;
  for (const T v : values) sum += static_cast<double>(v);
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (const T v : values) {
    const double d = static_cast<double>(v) - mean;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(n - 1);
  require(var >= kVarianceFloor, errc::degenerate_neuron,
          "MS is undefined for a constant neuron");
  std::vector<double> ms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(values[i]) - mean;
    ms[i] = d * d / var;
  }
  return ms;
}

}  // namespace

std::vector<double> retrospective_ms(std::span<const double> values) {
  return retrospective_ms_impl(values);
}

std::vector<double> retrospective_ms(std::span<const float> values) {
  return retrospective_ms_impl(values);
}

}  // namespace l2e
