#include "l2e/selector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "l2e/error.hpp"
#include "l2e/kernels.hpp"

namespace l2e {

namespace {

// Three-way partition quickselect on a scratch buffer (descending order).
double select_descending(std::span<double> a, std::size_t k,
                         std::minstd_rand& rng) {
  std::size_t lo = 0;
  std::size_t hi = a.size();
  while (true) {
    if (hi - lo == 1) return a[lo];
    std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
    const double pivot = a[pick(rng)];
    // [lo, gt) > pivot, [gt, i) == pivot, [lt, hi) < pivot
    std::size_t gt = lo;
    std::size_t i = lo;
    std::size_t lt = hi;
    while (i < lt) {
      if (a[i] > pivot) {
        std::swap(a[i++], a[gt++]);
      } else if (a[i] < pivot) {
        std::swap(a[i], a[--lt]);
      } else {
        ++i;
      }
    }
    const std::size_t n_greater = gt - lo;
    const std::size_t n_equal = lt - gt;
    if (k <= n_greater) {
      hi = gt;
    } else if (k <= n_greater + n_equal) {
      return pivot;
    } else {
      k -= n_greater + n_equal;
      lo = lt;
    }
  }
}

std::vector<double> valid_values(const MSVector& ms) {
  std::vector<double> out;
  out.reserve(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (ms.valid[i] != 0) out.push_back(ms.values[i]);
  }
  return out;
}

}  // namespace

double kth_largest(std::span<const double> values, std::size_t k) {
  require(k >= 1 && k <= values.size(), errc::invalid_argument,
          "rank k out of range");
  std::vector<double> buf(values.begin(), values.end());
  std::minstd_rand rng(0x5eed);
  return select_descending(buf, k, rng);
}

std::size_t target_count(double rate, std::size_t n) {
  require(rate > 0.0 && rate <= 1.0, errc::invalid_argument,
          "rate must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  return std::max<std::size_t>(1, std::min(k, n));
}

MovingThreshold::MovingThreshold(std::size_t n_neurons, std::size_t k_target,
                                 std::size_t warmup_batches, double initial_tau)
    : n_neurons_(n_neurons),
      k_target_(k_target),
      warmup_remaining_(warmup_batches),
      tau_star_(initial_tau) {
  require(n_neurons >= 1, errc::invalid_argument, "threshold needs neurons");
  require(k_target >= 1 && k_target <= n_neurons, errc::invalid_argument,
          "k must lie in [1, N]");
}

std::size_t MovingThreshold::rows_of(const MSVector& ms) const {
  require(!ms.values.empty() && ms.size() % n_neurons_ == 0,
          errc::invalid_argument,
          "MS batch length must be a nonzero multiple of the layer width");
  return ms.size() / n_neurons_;
}

void MovingThreshold::warmup_observe(const MSVector& ms) {
  require(warmup_remaining_ > 0, errc::invalid_argument,
          "warm-up already complete");
  const std::size_t rows = rows_of(ms);
  const std::size_t k = k_target_ * rows;
  std::vector<double> valid = valid_values(ms);
  if (valid.size() < k) {
    fail(errc::insufficient_valid_neurons,
         "batch has " + std::to_string(valid.size()) +
             " valid MS entries, need " + std::to_string(k));
  }
  std::minstd_rand rng(0x5eed);
  const double kth = select_descending(valid, k, rng);
  ++warmup_seen_;
  warmup_mean_ += (kth - warmup_mean_) / static_cast<double>(warmup_seen_);
  --warmup_remaining_;
  if (warmup_remaining_ == 0) tau_star_ = warmup_mean_;
}

double MovingThreshold::apply_feedback(std::size_t selected, std::size_t rows) {
  const double k_star =
      static_cast<double>(selected) / static_cast<double>(rows);
  last_k_star_ = k_star;
  tau_star_ += (k_star - static_cast<double>(k_target_)) /
               static_cast<double>(n_neurons_);
  return k_star;
}

double MovingThreshold::select_into(const MSVector& ms,
                                    std::span<std::uint8_t> mask) {
  require(!warming_up(), errc::warmup_incomplete,
          "select called before warm-up finished");
  const std::size_t rows = rows_of(ms);
  require(mask.size() == ms.size(), errc::invalid_argument,
          "mask length mismatch");
  const std::size_t selected =
      kernels::omp::threshold_mask(ms.values, ms.valid, tau_star_, mask);
  return apply_feedback(selected, rows);
}

double MovingThreshold::select_into_serial(const MSVector& ms,
                                           std::span<std::uint8_t> mask) {
  require(!warming_up(), errc::warmup_incomplete,
          "select called before warm-up finished");
  const std::size_t rows = rows_of(ms);
  require(mask.size() == ms.size(), errc::invalid_argument,
          "mask length mismatch");
  const std::size_t selected =
      kernels::serial::threshold_mask(ms.values, ms.valid, tau_star_, mask);
  return apply_feedback(selected, rows);
}

std::vector<std::uint8_t> MovingThreshold::select(const MSVector& ms) {
  std::vector<std::uint8_t> mask(ms.size(), 0);
  select_into(ms, mask);
  return mask;
}

std::vector<std::uint8_t> exact_topk_mask(const MSVector& ms, std::size_t k) {
  require(k >= 1, errc::invalid_argument, "k must be at least 1");
  std::vector<double> valid = valid_values(ms);
  require(valid.size() >= k, errc::invalid_argument,
          "fewer valid MS entries than k");
  std::minstd_rand rng(0x5eed);
  const double tau = select_descending(valid, k, rng);
  std::vector<std::uint8_t> mask(ms.size(), 0);
  kernels::serial::threshold_mask(ms.values, ms.valid, tau, mask);
  return mask;
}

namespace {

void check_fkr_shapes(const MsMatrix& ms, std::span<const FeatureId> labels,
                      std::span<const FeatureId> mono_features) {
  require(ms.values.size() == ms.rows * ms.cols && ms.rows > 0 && ms.cols > 0,
          errc::invalid_argument, "malformed MS matrix");
  require(labels.size() == ms.rows, errc::invalid_argument,
          "one label per input row required");
  require(mono_features.size() == ms.cols, errc::invalid_argument,
          "one relatively monosemantic feature per neuron required");
}

FkrReport finish_report(double rate, std::size_t k, double tau,
                        std::size_t inhibitions, std::size_t false_kills) {
  if (inhibitions == 0) fail(errc::undefined_fkr, "no entry reaches tau_k");
  FkrReport r;
  r.rate = rate;
  r.k = k;
  r.tau_k = tau;
  r.inhibitions = inhibitions;
  r.false_kills = false_kills;
  r.fkr = static_cast<double>(false_kills) / static_cast<double>(inhibitions);
  return r;
}

}  // namespace

FkrReport fkr(const MsMatrix& ms, std::span<const FeatureId> labels,
              std::span<const FeatureId> mono_features, double rate) {
  check_fkr_shapes(ms, labels, mono_features);
  const std::size_t k = target_count(rate, ms.values.size());
  const double tau = kth_largest(ms.values, k);
  std::size_t inhibitions = 0;
  std::size_t false_kills = 0;
  for (std::size_t i = 0; i < ms.rows; ++i) {
    for (std::size_t j = 0; j < ms.cols; ++j) {
      if (ms(i, j) >= tau) {
        ++inhibitions;
        if (labels[i] != mono_features[j]) ++false_kills;
      }
    }
  }
  return finish_report(rate, k, tau, inhibitions, false_kills);
}

std::vector<FkrReport> fkr_curve(const MsMatrix& ms,
                                 std::span<const FeatureId> labels,
                                 std::span<const FeatureId> mono_features,
                                 std::span<const double> rates) {
  check_fkr_shapes(ms, labels, mono_features);
  require(std::is_sorted(rates.begin(), rates.end()), errc::invalid_argument,
          "rates must be sorted ascending");

  // entries sorted by descending MS, carrying their false-kill flag
  struct Entry {
    double value;
    bool false_kill;
  };
  std::vector<Entry> entries(ms.values.size());
  for (std::size_t i = 0; i < ms.rows; ++i) {
    for (std::size_t j = 0; j < ms.cols; ++j) {
      entries[i * ms.cols + j] = {ms(i, j), labels[i] != mono_features[j]};
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.value > b.value; });
  std::vector<std::size_t> false_prefix(entries.size() + 1, 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    false_prefix[i + 1] = false_prefix[i] + (entries[i].false_kill ? 1 : 0);
  }

  std::vector<FkrReport> out;
  out.reserve(rates.size());
  for (const double rate : rates) {
    const std::size_t k = target_count(rate, entries.size());
    const double tau = entries[k - 1].value;
    // every entry >= tau, ties included
    const auto end = std::partition_point(
        entries.begin(), entries.end(),
        [tau](const Entry& e) { return e.value >= tau; });
    const auto inhibitions = static_cast<std::size_t>(end - entries.begin());
    out.push_back(finish_report(rate, k, tau, inhibitions,
                                false_prefix[inhibitions]));
  }
  return out;
}

std::vector<FeatureId> mono_features_of(const MsMatrix& ms,
                                        std::span<const FeatureId> labels) {
  require(labels.size() == ms.rows, errc::invalid_argument,
          "one label per input row required");
  std::vector<FeatureId> out(ms.cols);
  std::vector<double> column(ms.rows);
  for (std::size_t j = 0; j < ms.cols; ++j) {
    for (std::size_t i = 0; i < ms.rows; ++i) column[i] = ms(i, j);
    out[j] = relatively_mono_feature(column, labels).feature;
  }
  return out;
}

namespace {

struct Timing {
  std::vector<double> ms;
  double k_star_sum = 0.0;
};

BenchRow summarize(const std::string& name, const BenchOptions& o,
                   const Timing& t) {
  BenchRow row;
  row.strategy = name;
  row.n_neurons = o.n_neurons;
  row.rate = o.rate;
  row.batches = o.batches;
  const double n = static_cast<double>(t.ms.size());
  row.mean_ms = std::accumulate(t.ms.begin(), t.ms.end(), 0.0) / n;
  double sq = 0.0;
  for (const double v : t.ms) sq += (v - row.mean_ms) * (v - row.mean_ms);
  row.stddev_ms = t.ms.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  row.mean_k_star = t.k_star_sum / n;
  return row;
}

template <class F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

std::vector<BenchRow> bench_selection(const BenchOptions& opts) {
  require(opts.n_neurons >= 1, errc::invalid_argument, "n_neurons must be >= 1");
  require(opts.batches >= 1, errc::invalid_argument, "batches must be >= 1");
  require(opts.distinct_batches >= 1, errc::invalid_argument,
          "need at least one distinct batch");
  const std::size_t n = opts.n_neurons;
  const std::size_t k = target_count(opts.rate, n);

  // MS of Gaussian activations is chi-square(1) distributed
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<MSVector> pool(std::min(opts.distinct_batches, opts.batches));
  for (MSVector& ms : pool) {
    ms = MSVector(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = gauss(rng);
      ms.values[i] = z * z;
      ms.valid[i] = 1;
    }
  }
  auto batch = [&](std::size_t t) -> const MSVector& {
    return pool[t % pool.size()];
  };

  std::vector<std::uint8_t> mask(n);
  MovingThreshold thr_omp(n, k, opts.warmup_batches);
  MovingThreshold thr_serial(n, k, opts.warmup_batches);
  for (std::size_t t = 0; t < opts.warmup_batches; ++t) {
    thr_omp.warmup_observe(batch(t));
    thr_serial.warmup_observe(batch(t));
  }
  std::vector<double> scratch(n);
  std::vector<double> heap;
  heap.reserve(k);

  // Strategies take turns on every batch so that host noise (other tenants,
  // frequency changes) lands on all of them alike.
  Timing moving;
  Timing moving_serial;
  Timing sorted;
  Timing heaped;
  for (std::size_t t = 0; t < opts.batches; ++t) {
    const MSVector& ms = batch(opts.warmup_batches + t);
    double k_star = 0.0;
    moving.ms.push_back(time_ms([&] { k_star = thr_omp.select_into(ms, mask); }));
    moving.k_star_sum += k_star;

    moving_serial.ms.push_back(
        time_ms([&] { k_star = thr_serial.select_into_serial(ms, mask); }));
    moving_serial.k_star_sum += k_star;

    std::size_t selected = 0;
    sorted.ms.push_back(time_ms([&] {
      std::copy(ms.values.begin(), ms.values.end(), scratch.begin());
      std::sort(scratch.begin(), scratch.end(), std::greater<>());
      selected = kernels::serial::threshold_mask(ms.values, ms.valid,
                                                 scratch[k - 1], mask);
    }));
    sorted.k_star_sum += static_cast<double>(selected);

    heaped.ms.push_back(time_ms([&] {
      heap.clear();
      for (const double v : ms.values) {
        if (heap.size() < k) {
          heap.push_back(v);
          std::push_heap(heap.begin(), heap.end(), std::greater<>());
        } else if (v > heap.front()) {
          std::pop_heap(heap.begin(), heap.end(), std::greater<>());
          heap.back() = v;
          std::push_heap(heap.begin(), heap.end(), std::greater<>());
        }
      }
      selected = kernels::serial::threshold_mask(ms.values, ms.valid,
                                                 heap.front(), mask);
    }));
    heaped.k_star_sum += static_cast<double>(selected);
  }

  std::vector<BenchRow> rows;
  rows.push_back(summarize("moving_threshold", opts, moving));
  rows.push_back(summarize("moving_threshold_serial", opts, moving_serial));
  rows.push_back(summarize("sort", opts, sorted));
  rows.push_back(summarize("heap", opts, heaped));
  return rows;
}

}  // namespace l2e
