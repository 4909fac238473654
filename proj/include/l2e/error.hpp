#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace l2e {

enum class errc {
  invalid_argument,
  degenerate_neuron,
  missing_feature,
  empty_complement,
  insufficient_valid_neurons,
  warmup_incomplete,
  undefined_fkr,
  training_diverged,
  format_error,
  truncation_error,
  validation_error,
  io_error,
};

/// Stable, machine-parsable name of an error code (e.g. "invalid-argument").
std::string_view to_string(errc code) noexcept;

/// Every failure raised by the toolkit carries one of the codes above.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw error(code, what);
}

inline void require(bool cond, errc code, const char* what) {
  if (!cond) fail(code, what);
}

}  // namespace l2e
