#pragma once

#include <string>

#include "mindex/activation.hpp"
#include "mindex/ode.hpp"

namespace mindex {

// Exponent-level phase diagram. Boundaries are statements about d → ∞; at desk-scale d
// constants and log factors blur them.
enum class Region {
  not_correlating,
  self_interaction,
  weak_recovery_sgd,
  polylog,
  one_step,
  dynamics_undefined,
  critical_line_unaddressed,
};

const char* region_name(Region r);
Region parse_region(const std::string& text);

// δ ≥ max(0, max(ℓ/2, 1) − μ).
bool square_achievable(int ell, double delta, double mu);
// δ ≥ max(max(ℓ/2, 1) − μ, (1 − μ)/2).
bool correlation_achievable(int ell, double delta, double mu);
bool achievable(int ell, double delta, double mu, Loss loss);

double optimal_delta(int ell, double mu, Loss loss);

struct TimeExponent {
  double theta = 0.0;
  bool log_factor = false;
};

// Steps to weak recovery scale as d^θ (times log d when log_factor).
// Throws outside_region when the (δ, μ) point is not achievable for the loss.
TimeExponent predicted_time_exponent(int ell, double delta, double mu, Loss loss);

Region classify_region(int ell, double delta, double mu, Loss loss);

// Printed GLM lower-bound expansion for matched He2/He3 and the pieces it is built from:
// m_{t+1} − m_t ≥ γ0 d^{−δ}[population − d^{−δ} γ0 1{μ≠0} batch_correlation
//                            + d^{−δ+1−μ} (γ0/n0) high_dim].
struct GlmExpansion {
  double population = 0.0;
  double batch_correlation = 0.0;
  double high_dim = 0.0;
};

GlmExpansion glm_printed_expansion(int ell, double m, double noise);
double glm_printed_increment(int ell, double m, double noise, const ScalingRegime& regime);

}  // namespace mindex
