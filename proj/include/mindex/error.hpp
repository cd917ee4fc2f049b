#pragma once

#include <stdexcept>
#include <string>

namespace mindex {

enum class Errc {
  invalid_argument,
  unsupported_activation,
  non_psd_covariance,
  quadrature_nonconvergence,
  no_nonzero_coefficient,
  singular_orthogonal_overlap,
  psd_violation,
  zero_norm_update,
  outside_region,
  insufficient_data,
  all_censored,
  config,
  io,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}
  Errc code() const { return code_; }
  // Message without the error-name prefix.
  const std::string& detail() const { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace mindex
