#include "l2e/inhibition.hpp"

#include <cmath>

#include "l2e/error.hpp"

namespace l2e {

void InhibitionConfig::validate(std::size_t depth) const {
  require(rate > 0.0 && rate <= 1.0, errc::invalid_argument,
          "inhibition rate must lie in (0, 1]");
  require(lambda >= 0.0, errc::invalid_argument, "lambda must be >= 0");
  require(epsilon > 0.0, errc::invalid_argument, "epsilon must be > 0");
  require(!hooked_layers.empty(), errc::invalid_argument,
          "at least one hooked layer is required");
  for (const std::size_t l : hooked_layers) {
    require(l < depth, errc::invalid_argument, "hooked layer beyond depth");
  }
}

double ms_loss(std::span<const double> values, std::span<const double> means,
               double epsilon) {
  require(epsilon > 0.0, errc::invalid_argument, "epsilon must be > 0");
  require(values.size() == means.size(), errc::invalid_argument,
          "values and means differ in length");
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = values[i] - means[i];
    sum += std::log(u * u + epsilon);
  }
  return sum / static_cast<double>(values.size());
}

double ms_loss_grad(double value, double mean, double epsilon) {
  const double u = value - mean;
  return 2.0 * u / (u * u + epsilon);
}

}  // namespace l2e
