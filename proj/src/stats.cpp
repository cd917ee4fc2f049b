#include "mindex/stats.hpp"

#include <Eigen/Eigenvalues>

#include "mindex/error.hpp"

namespace mindex {

Eigen::MatrixXd SufficientStats::omega() const {
  const int p = this->p(), k = this->k();
  Eigen::MatrixXd om(p + k, p + k);
  om.topLeftCorner(p, p) = Q;
  om.topRightCorner(p, k) = M;
  om.bottomLeftCorner(k, p) = M.transpose();
  om.bottomRightCorner(k, k) = P;
  return om;
}

double SufficientStats::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega(), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

SufficientStats SufficientStats::glm(double m, double q) {
  SufficientStats s;
  s.Q = Eigen::MatrixXd::Constant(1, 1, q);
  s.M = Eigen::MatrixXd::Constant(1, 1, m);
  s.P = Eigen::MatrixXd::Identity(1, 1);
  s.a = Eigen::VectorXd::Ones(1);
  s.a_star = Eigen::VectorXd::Ones(1);
  return s;
}

SufficientStats SufficientStats::from_weights(const Eigen::MatrixXd& W,
                                              const Eigen::MatrixXd& W_star,
                                              const Eigen::VectorXd& a,
                                              const Eigen::VectorXd& a_star) {
  SufficientStats s;
  s.Q = W * W.transpose();
  s.M = W * W_star.transpose();
  s.P = W_star * W_star.transpose();
  s.a = a;
  s.a_star = a_star;
  return s;
}

SufficientStats SufficientStats::teacher_configuration(const Eigen::MatrixXd& P,
                                                       const Eigen::VectorXd& a_star) {
  SufficientStats s;
  s.Q = P;
  s.M = P;
  s.P = P;
  s.a = a_star;
  s.a_star = a_star;
  return s;
}

SufficientStats SufficientStats::warm_orthonormal(const Eigen::MatrixXd& M) {
  const int p = static_cast<int>(M.rows()), k = static_cast<int>(M.cols());
  SufficientStats s;
  s.M = M;
  s.P = Eigen::MatrixXd::Identity(k, k);
  s.Q = M * M.transpose();
  for (int j = 0; j < p; ++j) {
    const double rest = 1.0 - M.row(j).squaredNorm();
    if (rest < 0.0) throw Error(Errc::invalid_argument, "warm overlap row has norm above 1");
    s.Q(j, j) += rest;
  }
  s.a = Eigen::VectorXd::Ones(p);
  s.a_star = Eigen::VectorXd::Ones(k);
  return s;
}

}  // namespace mindex
