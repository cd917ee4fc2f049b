#pragma once

#include <Eigen/Dense>

namespace mindex {

// Order parameters of the teacher-student pair: Q = W Wᵀ, M = W W*ᵀ, P = W* W*ᵀ,
// plus the fixed second-layer weights.
struct SufficientStats {
  Eigen::MatrixXd Q;  // p×p
  Eigen::MatrixXd M;  // p×k
  Eigen::MatrixXd P;  // k×k
  Eigen::VectorXd a;
  Eigen::VectorXd a_star;

  int p() const { return static_cast<int>(Q.rows()); }
  int k() const { return static_cast<int>(P.rows()); }

  // Ω = [[Q, M], [Mᵀ, P]].
  Eigen::MatrixXd omega() const;
  double min_eigenvalue() const;

  // Single-index model with unit-norm teacher: Q = q, M = m, P = 1, a = a* = 1.
  static SufficientStats glm(double m, double q = 1.0);
  static SufficientStats from_weights(const Eigen::MatrixXd& W, const Eigen::MatrixXd& W_star,
                                      const Eigen::VectorXd& a, const Eigen::VectorXd& a_star);
  // W = W*, a = a*.
  static SufficientStats teacher_configuration(const Eigen::MatrixXd& P,
                                               const Eigen::VectorXd& a_star);
  // Unit-norm student rows w_j = Σ_r M_jr w*_r + sqrt(1 − ‖M_j‖²) u_j with orthonormal u_j
  // outside span(W*), for orthonormal teachers (P = I).
  static SufficientStats warm_orthonormal(const Eigen::MatrixXd& M);
};

}  // namespace mindex
