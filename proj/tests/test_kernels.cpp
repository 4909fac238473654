#include <doctest.h>

#include <cstring>
#include <vector>

#include "l2e/kernels.hpp"
#include "oracles.hpp"

using namespace l2e::kernels;

TEST_CASE("update_and_score: OpenMP and serial kernels are bitwise identical") {
  oracle::Rng rng(41);
  const std::size_t n = 10'007;
  std::vector<std::uint64_t> c1(n, 0), c2(n, 0);
  std::vector<double> m1(n, 0.0), m2(n, 0.0), s1(n, 0.0), s2(n, 0.0);
  std::vector<double> v1(n), v2(n);
  std::vector<std::uint8_t> ok1(n), ok2(n);
  std::vector<double> x(n);
  for (int t = 0; t < 20; ++t) {
    for (double& v : x) v = rng.gaussian() * 3.0 + 1.0;
    const auto timing = t % 2 == 0 ? score_timing::post_update : score_timing::causal;
    serial::update_and_score({c1, m1, s1}, std::span<const double>(x), {v1, ok1},
                             timing, {});
    omp::update_and_score({c2, m2, s2}, std::span<const double>(x), {v2, ok2},
                          timing, {});
    CHECK(c1 == c2);
    CHECK(std::memcmp(m1.data(), m2.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(s1.data(), s2.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(v1.data(), v2.data(), n * sizeof(double)) == 0);
    CHECK(ok1 == ok2);
  }
}

TEST_CASE("threshold_mask: OpenMP and serial agree") {
  oracle::Rng rng(42);
  const std::size_t n = 50'000;
  std::vector<double> values(n);
  std::vector<std::uint8_t> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = rng.uniform();
    valid[i] = rng.uniform() < 0.9 ? 1 : 0;
  }
  std::vector<std::uint8_t> a(n), b(n);
  for (const double tau : {-1.0, 0.25, 0.5, 0.99, 2.0}) {
    const std::size_t ca = serial::threshold_mask(values, valid, tau, a);
    const std::size_t cb = omp::threshold_mask(values, valid, tau, b);
    CHECK(ca == cb);
    CHECK(a == b);
    std::size_t brute = 0;
    for (std::size_t i = 0; i < n; ++i) brute += (valid[i] && values[i] >= tau) ? 1 : 0;
    CHECK(ca == brute);
  }
}

TEST_CASE("affine: OpenMP and serial agree bitwise") {
  oracle::Rng rng(43);
  const std::size_t rows = 130, in = 37, out = 64;
  std::vector<double> x(rows * in), w(out * in), b(out);
  for (double& v : x) v = rng.gaussian();
  for (double& v : w) v = rng.gaussian();
  for (double& v : b) v = rng.gaussian();
  std::vector<double> y1(rows * out), y2(rows * out);
  serial::affine(x, rows, in, w, b, out, y1);
  omp::affine(x, rows, in, w, b, out, y2);
  CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0);
  // one entry by hand
  double want = b[5];
  for (std::size_t i = 0; i < in; ++i) want += x[3 * in + i] * w[5 * in + i];
  CHECK(y1[3 * out + 5] == want);
}
