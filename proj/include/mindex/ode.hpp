#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mindex/activation.hpp"
#include "mindex/kernels.hpp"
#include "mindex/stats.hpp"

namespace mindex {

// γ = γ0 d^{-δ}, n_b = round(n0 d^μ), Δτ = d^{max(-δ, -2δ+1-μ)}.
struct ScalingRegime {
  double gamma0 = 1.0;
  double delta = 0.0;
  double n0 = 1.0;
  double mu = 0.0;
  std::int64_t d = 1;

  double gamma() const;
  std::int64_t n_b() const;
  double dtau() const;
  // δ ≥ 0 and 2δ + μ ≥ 1: the scaling admits a deterministic limit.
  bool defined() const;
  // Gradient-flow terms O(d^{-δ}) survive: δ + μ ≥ 1.
  bool flag_population() const;
  // High-dimensional noise O(d^{-2δ+1-μ}) survives: δ + μ ≤ 1.
  bool flag_hd_noise() const;
  void validate() const;
};

// Kernels plus the label noise and the loss whose gradient is followed.
struct OdeModel {
  KernelSet kernels;
  double noise = 0.0;
  Loss loss = Loss::square;
};

// ψ_jr = E[σ'(λ_j) λ*_r E]                     (p×k)
Eigen::MatrixXd psi_matrix(const OdeModel& model, const SufficientStats& s);
// φ^GF_jl = E[σ'(λ_j) λ_l E]                    (p×p, not symmetric)
Eigen::MatrixXd phi_gf_matrix(const OdeModel& model, const SufficientStats& s);
// φ^HD_jl = E[σ'(λ_j) σ'(λ_l) E²], noise included (p×p)
Eigen::MatrixXd phi_hd_matrix(const OdeModel& model, const SufficientStats& s);

struct PhiBC {
  Eigen::MatrixXd value;
  bool regularized = false;
};
// ⟨E[σ'_j E z], E[σ'_l E z]⟩ split into the span of W* and its complement.
PhiBC phi_bc_matrix(const OdeModel& model, const SufficientStats& s);
PhiBC phi_bc_matrix(const SufficientStats& s, const Eigen::MatrixXd& psi,
                    const Eigen::MatrixXd& phi_gf);

struct OdeDerivative {
  Eigen::MatrixXd dM;
  Eigen::MatrixXd dQ;
  bool frozen = false;  // no indicator active
};

OdeDerivative ode_rhs(const OdeModel& model, const SufficientStats& s, const ScalingRegime& regime);

struct FullProcessStep {
  SufficientStats next;
  bool regularized = false;
};

// One step of the finite-d deterministic map with all terms at their finite-d size:
// M' = M + γ/p a_j ψ, Q' = Q + Φ, followed by the row normalization.
FullProcessStep full_process_step(const OdeModel& model, const SufficientStats& s,
                                  const ScalingRegime& regime);

enum class Integrator { euler, rk4 };
Integrator parse_integrator(const std::string& text);

struct IntegrateOptions {
  Integrator method = Integrator::rk4;
  double step = 0.0;          // 0: euler uses Δτ, rk4 uses min(Δτ, 1e-2)
  double record_every = 0.0;  // 0: record every step
  std::optional<double> eta;  // record the first τ with ‖M‖_F ≥ η
  bool stop_at_eta = false;
  double psd_tol = 1e-8;
};

struct OdeTrajectory {
  std::vector<double> tau;
  std::vector<SufficientStats> stats;
  std::vector<double> risk;
  std::vector<double> risk_stderr;
  std::optional<double> tau_eta;  // first crossing; for the full process this is step·Δτ
  std::optional<std::int64_t> step_eta;
  bool frozen = false;
  bool regularized = false;
  double min_eigenvalue = 0.0;  // smallest eigenvalue of Ω seen along the run
};

OdeTrajectory integrate(const OdeModel& model, const SufficientStats& s0,
                        const ScalingRegime& regime, double tau_max,
                        const IntegrateOptions& options = {});

// Iterates full_process_step `steps` times, recording every `record_stride` steps.
OdeTrajectory iterate_full_process(const OdeModel& model, const SufficientStats& s0,
                                   const ScalingRegime& regime, std::int64_t steps,
                                   std::int64_t record_stride = 1,
                                   std::optional<double> eta = std::nullopt,
                                   bool stop_at_eta = false, double psd_tol = 1e-8);

}  // namespace mindex
