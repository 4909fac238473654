#include "l2e/error.hpp"

namespace l2e {

std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::invalid_argument: return "invalid-argument";
    case errc::degenerate_neuron: return "degenerate-neuron";
    case errc::missing_feature: return "missing-feature";
    case errc::empty_complement: return "empty-complement";
    case errc::insufficient_valid_neurons: return "insufficient-valid-neurons";
    case errc::warmup_incomplete: return "warmup-incomplete";
    case errc::undefined_fkr: return "undefined-fkr";
    case errc::training_diverged: return "training-diverged";
    case errc::format_error: return "format-error";
    case errc::truncation_error: return "truncation-error";
    case errc::validation_error: return "validation-error";
    case errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace l2e
