#include "mindex/error.hpp"

namespace mindex {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::unsupported_activation: return "unsupported-activation";
    case Errc::non_psd_covariance: return "non-psd-covariance";
    case Errc::quadrature_nonconvergence: return "quadrature-nonconvergence";
    case Errc::no_nonzero_coefficient: return "no-nonzero-coefficient";
    case Errc::singular_orthogonal_overlap: return "singular-orthogonal-overlap";
    case Errc::psd_violation: return "psd-violation";
    case Errc::zero_norm_update: return "zero-norm-update";
    case Errc::outside_region: return "outside-region";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::all_censored: return "all-censored";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

}  // namespace mindex
