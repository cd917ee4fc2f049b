#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mindex {

namespace detail {

// Gauss-Legendre rule on [-1, 1], cached per n.
const QuadratureRule& gauss_legendre_rule(int n);

inline constexpr double kTabulatedCutoff = 12.0;
inline constexpr double kTabulatedPiece = 0.5;

inline std::vector<double> tabulated_breakpoints(const Activation& act) {
  std::vector<double> pts{-kTabulatedCutoff, kTabulatedCutoff};
  for (double x : act.table_x())
    if (x > -kTabulatedCutoff && x < kTabulatedCutoff) pts.push_back(x);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

template <class F>
double gaussian_expectation(const Activation& act, F&& g, bool refine) {
  if (act.kind() != ActivationKind::tabulated) {
    const QuadratureRule& rule = gauss_hermite_rule(refine ? 2 * kQuadratureNodes : kQuadratureNodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * g(rule.nodes[i]);
    return acc;
  }
  const QuadratureRule& gl = detail::gauss_legendre_rule(refine ? 20 : 10);
  const std::vector<double> pts = detail::tabulated_breakpoints(act);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const int pieces = std::max(1, static_cast<int>(std::ceil((pts[s + 1] - pts[s]) / detail::kTabulatedPiece)));
    const double h = (pts[s + 1] - pts[s]) / pieces;
    for (int q = 0; q < pieces; ++q) {
      const double lo = pts[s] + q * h;
      const double mid = lo + 0.5 * h;
      for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double x = mid + 0.5 * h * gl.nodes[i];
        acc += 0.5 * h * gl.weights[i] * g(x) * std::exp(-0.5 * x * x) * inv_sqrt_2pi;
      }
    }
  }
  return acc;
}

}  // namespace mindex
