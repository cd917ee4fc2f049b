#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

#include "mindex/activation.hpp"
#include "mindex/stats.hpp"

namespace mindex {

// Covariance entries in the argument order of the kernel definitions:
//   I3(αα, αβ, αγ, ββ, βγ, γγ)                  = E[σ'(λα) λβ σ(λγ)]
//   I4(αα, αβ, αγ, αδ, ββ, βγ, βδ, γγ, γδ, δδ)  = E[σ'(λα) σ'(λβ) σ(λγ) σ(λδ)]
struct Cov3 {
  double aa, ab, ac, bb, bc, cc;
};
struct Cov4 {
  double aa, ab, ac, ad, bb, bc, bd, cc, cd, dd;
};

// Closed forms, available when act.analytic_kernels(). Throw unsupported-activation otherwise.
double i2(const Activation& act, double aa, double ab, double bb);      // E[σ(λα) σ(λβ)]
double i3(const Activation& act, const Cov3& w);
double i4(const Activation& act, const Cov4& w);
double i2_noise(const Activation& act, double aa, double ab, double bb);  // E[σ'(λα) σ'(λβ)]

enum class KernelKind { i2, i3, i4, i2noise, custom };

// `first` fills the derivative slots (α, β) and `second` the value slots (γ, δ);
// for i2 the expectation is E[first(λα) second(λβ)].
struct ActivationPair {
  Activation first;
  Activation second;
};

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

using CustomIntegrand = std::function<double(std::span<const double>)>;

McEstimate mc_kernel(KernelKind kind, const ActivationPair& acts, const Eigen::MatrixXd& cov,
                     std::int64_t n_samples, std::uint64_t seed,
                     const CustomIntegrand& custom = {});

// Factor L with L Lᵀ = cov (symmetric square root; handles singular PSD input).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov);

enum class Role { student, teacher };

// Kernels for a student/teacher activation pair. Closed forms when both activations are the
// same analytic kind; otherwise Monte Carlo with a fixed seed (common random numbers).
class KernelSet {
 public:
  static constexpr std::int64_t kDefaultMcSamples = 100000;
  static constexpr std::uint64_t kDefaultMcSeed = 0x6b65726e656c73ull;

  KernelSet(Activation student, Activation teacher,
            std::int64_t mc_samples = kDefaultMcSamples, std::uint64_t mc_seed = kDefaultMcSeed);

  bool analytic() const { return analytic_; }
  const Activation& student() const { return student_; }
  const Activation& teacher() const { return teacher_; }

  McEstimate i2(Role a, Role b, double aa, double ab, double bb) const;
  McEstimate i3(Role gamma, const Cov3& w) const;
  McEstimate i4(Role gamma, Role delta, const Cov4& w) const;
  McEstimate i2_noise(double aa, double ab, double bb) const;

 private:
  const Activation& pick(Role r) const { return r == Role::student ? student_ : teacher_; }

  Activation student_, teacher_;
  bool analytic_;
  std::int64_t mc_samples_;
  std::uint64_t mc_seed_;
};

// R = ½ E[(y − f)²] = Δ/2 + ½[(1/p²)Σ a_s a_u I2(Q) + (1/k²)Σ a*_r a*_t I2(P)
//                              − (2/pk)Σ a_s a*_r I2(Q, M, P)].
McEstimate population_risk(const SufficientStats& stats, double noise, const KernelSet& kernels);

}  // namespace mindex
