#pragma once

#include <span>
#include <string>
#include <vector>

namespace mindex {

enum class ActivationKind { hermite, hermite_mixture, erf_scaled, tanh, tanh_of_product, tabulated };

// A scalar nonlinearity used as student activation or teacher target.
// hermite_mixture (Σ_k w_k He_k) is an extension used for composite targets such as He2 + 0.5 He4.
class Activation {
 public:
  static Activation hermite(int degree);
  static Activation hermite_mixture(std::vector<double> weights);
  static Activation erf_scaled();
  static Activation tanh();
  // Multi-index target tanh(λ*_1 ⋯ λ*_k). As a scalar function it is tanh.
  static Activation tanh_of_product();
  // Piecewise-linear interpolation of the table, linearly extrapolated past the ends.
  static Activation tabulated(std::vector<double> xs, std::vector<double> ys);

  // Accepts the names produced by name(): he3, erf, tanh, tanh_of_product,
  // mix(w0,w1,...), table(x0:y0,x1:y1,...).
  static Activation parse(const std::string& text);

  ActivationKind kind() const { return kind_; }
  int degree() const { return degree_; }
  bool analytic_kernels() const;
  bool is_multi_index() const { return kind_ == ActivationKind::tanh_of_product; }

  double value(double x) const;
  double derivative(double x) const;
  // Teacher evaluation on all k teacher fields; only multi-index kinds use more than fields[0].
  double target(std::span<const double> fields) const;

  std::string name() const;

  const std::vector<double>& table_x() const { return xs_; }
  const std::vector<double>& table_y() const { return ys_; }
  const std::vector<double>& mixture_weights() const { return weights_; }

  friend bool operator==(const Activation& a, const Activation& b) = default;

 private:
  ActivationKind kind_ = ActivationKind::hermite;
  int degree_ = 0;
  std::vector<double> weights_;
  std::vector<double> xs_, ys_;
};

// Probabilists' Hermite polynomial He_k, k ≤ 20.
double hermite_poly(int k, double x);
// Derivative He_k' = k He_{k-1}.
double hermite_poly_derivative(int k, double x);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1: expectation under N(0,1)
};

// Gauss-Hermite rule for the standard normal weight (Golub-Welsch). Cached per n.
const QuadratureRule& gauss_hermite_rule(int n);

inline constexpr int kQuadratureNodes = 200;
inline constexpr int kDefaultMaxDegree = 12;
inline constexpr double kDefaultZeroTol = 1e-9;

// E[g(ξ)], ξ ~ N(0,1), for integrands built from act. Smooth kinds use Gauss-Hermite with
// `nodes` points; tabulated kinds use per-segment Gauss-Legendre (the kinks defeat GH).
// `refine` doubles the resolution for convergence checks.
template <class F>
double gaussian_expectation(const Activation& act, F&& g, bool refine = false);

struct HermiteProfile {
  std::vector<double> coeffs;  // orthonormal basis he_k = He_k / sqrt(k!)
  int max_degree = kDefaultMaxDegree;
  double zero_tol = kDefaultZeroTol;
  double c_sq = 0.0;  // E[z σ(z) σ'(z)]

  // Coefficient in the raw basis E[act He_k] = sqrt(k!) c_k.
  double raw(int k) const;
};

HermiteProfile hermite_coefficients(const Activation& act, int max_degree = kDefaultMaxDegree,
                                    double zero_tol = kDefaultZeroTol);

int information_exponent(const HermiteProfile& profile);

// φ(m) = E[σ'(λ) f*'(λ*)] = Σ_k (k+1) c_{k+1} c*_{k+1} m^k.
double drift_phi(const HermiteProfile& student, const HermiteProfile& teacher, double m);

enum class Loss { square, correlation };

// ψ^corr(m) = E[f*(λ*) σ''(λ)] = Σ_k sqrt((k+1)(k+2)) c_{k+2} c*_k m^k;
// ψ^sq = ψ^corr − c^sq.
double drift_psi(const HermiteProfile& student, const HermiteProfile& teacher, double m,
                 Loss loss);

const char* loss_name(Loss loss);
Loss parse_loss(const std::string& text);

}  // namespace mindex

#include "mindex/detail/quadrature_impl.hpp"
