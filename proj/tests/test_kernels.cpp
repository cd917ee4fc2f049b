#include <cmath>

#include "doctest.h"
#include "mindex/error.hpp"
#include "mindex/kernels.hpp"
#include "mindex/rng.hpp"
#include "oracles/gaussian_moments.hpp"

using namespace mindex;

namespace {

Eigen::Matrix4d random_psd(Stream& rng) {
  Eigen::Matrix4d A;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A(i, j) = rng.normal() / 2.0;
  return A * A.transpose();
}

Cov4 cov4_of(const Eigen::Matrix4d& c) {
  return {c(0, 0), c(0, 1), c(0, 2), c(0, 3), c(1, 1), c(1, 2), c(1, 3), c(2, 2), c(2, 3), c(3, 3)};
}

Cov3 cov3_of(const Eigen::Matrix4d& c) {
  return {c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)};
}

std::array<std::array<double, 4>, 4> to_array(const Eigen::Matrix4d& c) {
  std::array<std::array<double, 4>, 4> a{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = c(i, j);
  return a;
}

}  // namespace

TEST_CASE("closed-form values") {
  const Activation he2 = Activation::hermite(2), he3 = Activation::hermite(3);
  CHECK(i2(he2, 1, 1, 1) == doctest::Approx(2.0));
  CHECK(i2(he2, 1, 0, 1) == doctest::Approx(0.0));
  CHECK(i2(he3, 1, 0.5, 1) == doctest::Approx(0.75));
  CHECK(i3(he2, {1, 1, 1, 1, 1, 1}) == doctest::Approx(4.0));
  CHECK(i3(he2, {1, 0, 0, 1, 1, 1}) == doctest::Approx(0.0));
  CHECK(i3(he3, {1, 1, 1, 1, 1, 1}) == doctest::Approx(18.0));
  CHECK(i4(he2, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == doctest::Approx(40.0));
  CHECK(i4(he2, {1, 0, 0, 0, 1, 0.3, 0.2, 1, 0.1, 1}) == doctest::Approx(0.0));
  CHECK(i4(he3, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == doctest::Approx(3348.0));
  CHECK(i2_noise(he2, 1, 1, 1) == doctest::Approx(4.0));
  CHECK(i2_noise(he3, 1, 1, 1) == doctest::Approx(18.0));
  CHECK(i2_noise(he3, 1, 0, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(i2(Activation::tanh(), 1, 0, 1), Error);
}

TEST_CASE("Hermite closed forms equal the exact moment oracle") {
  Stream rng(77, 1);
  for (int deg : {2, 3}) {
    const Activation act = Activation::hermite(deg);
    for (int trial = 0; trial < 25; ++trial) {
      const Eigen::Matrix4d c = random_psd(rng);
      oracle::Moments mom(to_array(c));
      using oracle::hermite;
      using oracle::hermite_derivative;
      const double e2 = mom.expect(hermite(deg, 0) * hermite(deg, 1));
      const double e3 = mom.expect(hermite_derivative(deg, 0) * oracle::Poly::var(1) * hermite(deg, 2));
      const double e4 = mom.expect(hermite_derivative(deg, 0) * hermite_derivative(deg, 1) *
                                   hermite(deg, 2) * hermite(deg, 3));
      const double en = mom.expect(hermite_derivative(deg, 0) * hermite_derivative(deg, 1));
      const double tol = 1e-9;
      CHECK(i2(act, c(0, 0), c(0, 1), c(1, 1)) == doctest::Approx(e2).epsilon(tol).scale(1));
      CHECK(i3(act, cov3_of(c)) == doctest::Approx(e3).epsilon(tol).scale(1));
      CHECK(i4(act, cov4_of(c)) == doctest::Approx(e4).epsilon(tol).scale(1));
      CHECK(i2_noise(act, c(0, 0), c(0, 1), c(1, 1)) == doctest::Approx(en).epsilon(tol).scale(1));
    }
  }
}

TEST_CASE("erf closed forms agree with Monte Carlo") {
  Stream rng(78, 1);
  const Activation erf = Activation::erf_scaled();
  const ActivationPair pair{erf, erf};
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Matrix4d c = random_psd(rng);
    const std::int64_t n = 200000;
    const McEstimate e2 = mc_kernel(KernelKind::i2, pair, c.topLeftCorner(2, 2), n, 10 + trial);
    const McEstimate e3 = mc_kernel(KernelKind::i3, pair, c.topLeftCorner(3, 3), n, 20 + trial);
    const McEstimate e4 = mc_kernel(KernelKind::i4, pair, c, n, 30 + trial);
    const McEstimate en = mc_kernel(KernelKind::i2noise, pair, c.topLeftCorner(2, 2), n, 40 + trial);
    CHECK(std::abs(i2(erf, c(0, 0), c(0, 1), c(1, 1)) - e2.estimate) < 4 * e2.stderr_);
    CHECK(std::abs(i3(erf, cov3_of(c)) - e3.estimate) < 4 * e3.stderr_);
    CHECK(std::abs(i4(erf, cov4_of(c)) - e4.estimate) < 4 * e4.stderr_);
    CHECK(std::abs(i2_noise(erf, c(0, 0), c(0, 1), c(1, 1)) - en.estimate) < 4 * en.stderr_);
  }
}

TEST_CASE("symmetries") {
  Stream rng(79, 1);
  for (const Activation& act : {Activation::hermite(2), Activation::hermite(3), Activation::erf_scaled()}) {
    for (int t = 0; t < 10; ++t) {
      const Eigen::Matrix4d c = random_psd(rng);
      CHECK(i2(act, c(0, 0), c(0, 1), c(1, 1)) == doctest::Approx(i2(act, c(1, 1), c(0, 1), c(0, 0))));
      // Swap α↔β and γ↔δ simultaneously.
      const Cov4 w = cov4_of(c);
      const Cov4 s{w.bb, w.ab, w.bd, w.bc, w.aa, w.ad, w.ac, w.dd, w.cd, w.cc};
      CHECK(i4(act, w) == doctest::Approx(i4(act, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mc_kernel contract") {
  const Activation he2 = Activation::hermite(2), he3 = Activation::hermite(3);
  const McEstimate z = mc_kernel(KernelKind::i2, {he2, he2}, Eigen::Matrix2d::Identity(), 1000000, 5);
  CHECK(std::abs(z.estimate) < 3 * z.stderr_);
  const McEstimate n = mc_kernel(KernelKind::i2noise, {he3, he3}, Eigen::Matrix2d::Ones(), 1000000, 6);
  CHECK(std::abs(n.estimate - 18.0) < 4 * n.stderr_);
  const McEstimate small = mc_kernel(KernelKind::i2noise, {he3, he3}, Eigen::Matrix2d::Ones(), 1000, 7);
  const double ratio = small.stderr_ / n.stderr_;
  CHECK(ratio > std::sqrt(1000.0) * 0.6);
  CHECK(ratio < std::sqrt(1000.0) * 1.6);
  const McEstimate again = mc_kernel(KernelKind::i2noise, {he3, he3}, Eigen::Matrix2d::Ones(), 1000, 7);
  CHECK(again.estimate == small.estimate);
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(mc_kernel(KernelKind::i2, {he2, he2}, bad, 1000, 1), Error);
  const McEstimate custom = mc_kernel(KernelKind::custom, {he2, he2}, Eigen::Matrix2d::Identity(), 100000, 8,
                                      [](std::span<const double> x) { return x[0] * x[0]; });
  CHECK(std::abs(custom.estimate - 1.0) < 4 * custom.stderr_);
}

TEST_CASE("population risk") {
  const KernelSet he2(Activation::hermite(2), Activation::hermite(2));
  CHECK(population_risk(SufficientStats::glm(1.0), 0.0, he2).estimate == doctest::Approx(0.0));
  CHECK(population_risk(SufficientStats::glm(0.0), 0.0, he2).estimate == doctest::Approx(2.0));
  const SufficientStats s = SufficientStats::glm(0.37);
  CHECK(population_risk(s, 0.5, he2).estimate - population_risk(s, 0.0, he2).estimate ==
        doctest::Approx(0.25).epsilon(1e-14));

  const KernelSet erf(Activation::erf_scaled(), Activation::erf_scaled());
  Eigen::MatrixXd P(2, 2);
  P << 1.0, 0.2, 0.2, 0.8;
  Eigen::VectorXd a(2);
  a << 0.7, 1.3;
  CHECK(population_risk(SufficientStats::teacher_configuration(P, a), 0.3, erf).estimate ==
        doctest::Approx(0.15).epsilon(1e-14));

  // Direct Monte Carlo of ½E[(y − f)²] for a p = k = 2 erf committee.
  Stream rng(90, 1);
  const int d = 6;
  Eigen::MatrixXd W(2, d), Ws(2, d);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < d; ++j) {
      W(i, j) = rng.normal() / std::sqrt(double(d));
      Ws(i, j) = rng.normal() / std::sqrt(double(d));
    }
  Eigen::VectorXd as(2);
  as << 1.0, -0.5;
  const SufficientStats st = SufficientStats::from_weights(W, Ws, a, as);
  const double noise = 0.1;
  const double analytic = population_risk(st, noise, erf).estimate;
  CHECK(analytic >= noise / 2);
  const Activation sig = Activation::erf_scaled();
  double sum = 0, sum2 = 0;
  const int n = 400000;
  Eigen::VectorXd z(d);
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < d; ++j) z(j) = rng.normal();
    const Eigen::VectorXd lam = W * z, lam_s = Ws * z;
    double f = 0, y = 0;
    for (int j = 0; j < 2; ++j) {
      f += a(j) * sig.value(lam(j)) / 2;
      y += as(j) * sig.value(lam_s(j)) / 2;
    }
    y += std::sqrt(noise) * rng.normal();
    const double v = 0.5 * (y - f) * (y - f);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - analytic) < 4 * se);

  // Monte-Carlo kernel fallback for non-analytic pairs tracks the same quantity.
  const KernelSet mixed(Activation::tanh(), Activation::erf_scaled(), 200000);
  const McEstimate r = population_risk(SufficientStats::glm(0.4), 0.0, mixed);
  CHECK(r.stderr_ > 0.0);
  const KernelSet erf_mc(Activation::erf_scaled(), Activation::tanh(), 200000);
  CHECK_FALSE(erf_mc.analytic());
}

TEST_CASE("risk is at least the noise floor for matched committees") {
  Stream rng(91, 1);
  const KernelSet he3(Activation::hermite(3), Activation::hermite(3));
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd W(2, 5), Ws(2, 5);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 5; ++j) {
        W(i, j) = rng.normal() / 2;
        Ws(i, j) = rng.normal() / 2;
      }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
    const SufficientStats st = SufficientStats::from_weights(W, Ws, ones, ones);
    CHECK(population_risk(st, 0.2, he3).estimate >= 0.1 - 1e-12);
  }
}
