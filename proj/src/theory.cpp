#include "mindex/theory.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mindex/error.hpp"

namespace mindex {

namespace {

constexpr std::array<const char*, 7> kRegionNames = {
    "not_correlating", "self_interaction", "weak_recovery_sgd", "polylog",
    "one_step",        "dynamics_undefined", "critical_line_unaddressed"};

void check_ell(int ell) {
  if (ell < 1) throw Error(Errc::invalid_argument, "information exponent must be at least 1");
}

double half_ell_or_one(int ell) { return std::max(ell / 2.0, 1.0); }

bool one_step(int ell, double delta, double mu) {
  return mu >= ell && delta <= (1.0 - ell) / 2.0;
}

}  // namespace

const char* region_name(Region r) { return kRegionNames[static_cast<std::size_t>(r)]; }

Region parse_region(const std::string& text) {
  for (std::size_t i = 0; i < kRegionNames.size(); ++i)
    if (text == kRegionNames[i]) return static_cast<Region>(i);
  throw Error(Errc::invalid_argument, "unknown region '" + text + "'");
}

bool square_achievable(int ell, double delta, double mu) {
  check_ell(ell);
  return delta >= std::max(0.0, half_ell_or_one(ell) - mu);
}

bool correlation_achievable(int ell, double delta, double mu) {
  check_ell(ell);
  return delta >= std::max(half_ell_or_one(ell) - mu, (1.0 - mu) / 2.0);
}

bool achievable(int ell, double delta, double mu, Loss loss) {
  return loss == Loss::square ? square_achievable(ell, delta, mu)
                              : correlation_achievable(ell, delta, mu);
}

double optimal_delta(int ell, double mu, Loss loss) {
  check_ell(ell);
  if (mu < 0.0) throw Error(Errc::invalid_argument, "mu must be nonnegative");
  const double d = ell / 2.0 - mu;
  return loss == Loss::square ? std::max(d, 0.0) : d;
}

TimeExponent predicted_time_exponent(int ell, double delta, double mu, Loss loss) {
  check_ell(ell);
  if (one_step(ell, delta, mu)) return {0.0, false};
  if (!achievable(ell, delta, mu, loss))
    throw Error(Errc::outside_region, "no weak recovery predicted at delta=" + std::to_string(delta) +
                                          ", mu=" + std::to_string(mu) + " for " + loss_name(loss) + " loss");
  const double raw = delta + std::max(ell / 2.0 - 1.0, 0.0);
  return {std::max(0.0, raw), ell == 2 || raw <= 0.0};
}

Region classify_region(int ell, double delta, double mu, Loss /*loss*/) {
  // The label describes the plane, not one loss; achievable() answers per loss.
  check_ell(ell);
  if (one_step(ell, delta, mu)) return Region::one_step;
  const bool sq = square_achievable(ell, delta, mu);
  if (correlation_achievable(ell, delta, mu)) {
    const double mu_crit = std::max(ell - 1.0, 1.0);
    if (mu >= mu_crit) {
      if (delta + std::max(ell / 2.0 - 1.0, 0.0) <= 0.0) return Region::polylog;
      return sq ? Region::weak_recovery_sgd : Region::critical_line_unaddressed;
    }
    return sq ? Region::weak_recovery_sgd : Region::self_interaction;
  }
  return delta < (1.0 - mu) / 2.0 ? Region::dynamics_undefined : Region::not_correlating;
}

GlmExpansion glm_printed_expansion(int ell, double m, double noise) {
  const double m2 = m * m, m3 = m2 * m, m4 = m3 * m, m5 = m4 * m;
  if (ell == 2)
    return {4 * m - 4 * m3, 8 * m - 8 * m3, 24 * m - 24 * m3 + 2 * m2 * noise};
  if (ell == 3)
    return {18 * m2 - 18 * m4, 162 * m + 324 * m4 - 162 * m5,
            -1728 * m - 648 * m3 + 3348 * m4 - 972 * m5 - 9 * noise * m3};
  throw Error(Errc::unsupported_activation, "printed GLM expansion exists for l = 2, 3 only");
}

double glm_printed_increment(int ell, double m, double noise, const ScalingRegime& r) {
  const GlmExpansion e = glm_printed_expansion(ell, m, noise);
  const double d = static_cast<double>(r.d);
  const double bc = r.mu != 0.0 ? std::pow(d, -r.delta) * r.gamma0 * e.batch_correlation : 0.0;
  const double hd = std::pow(d, -r.delta + 1 - r.mu) * (r.gamma0 / r.n0) * e.high_dim;
  return r.gamma0 * std::pow(d, -r.delta) * (e.population - bc + hd);
}

}  // namespace mindex
