#include <cmath>

#include "doctest.h"
#include "mindex/error.hpp"
#include "mindex/kernels.hpp"
#include "mindex/ode.hpp"
#include "mindex/theory.hpp"

using namespace mindex;

TEST_CASE("optimal learning-rate exponent") {
  CHECK(optimal_delta(3, 0.0, Loss::square) == 1.5);
  CHECK(optimal_delta(3, 2.0, Loss::square) == 0.0);
  CHECK(optimal_delta(3, 2.0, Loss::correlation) == -0.5);
  CHECK(optimal_delta(2, 1.0, Loss::square) == 0.0);
  CHECK(optimal_delta(2, 1.0, Loss::correlation) == 0.0);
  CHECK_THROWS_AS(optimal_delta(0, 1.0, Loss::square), Error);
}

TEST_CASE("predicted time exponents") {
  auto te = predicted_time_exponent(3, 0.0, 1.5, Loss::square);
  CHECK(te.theta == 0.5);
  CHECK_FALSE(te.log_factor);
  te = predicted_time_exponent(2, 0.0, 1.0, Loss::correlation);
  CHECK(te.theta == 0.0);
  CHECK(te.log_factor);
  te = predicted_time_exponent(1, 1.0, 0.0, Loss::square);
  CHECK(te.theta == 1.0);
  CHECK_FALSE(te.log_factor);
  try {
    predicted_time_exponent(3, -0.35, 1.85, Loss::square);
    FAIL("expected outside-region");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::outside_region);
  }
  CHECK(predicted_time_exponent(3, -0.35, 1.85, Loss::correlation).theta == doctest::Approx(0.15));
}

TEST_CASE("region labels at reference points") {
  CHECK(classify_region(3, 0.0, 1.5, Loss::square) == Region::weak_recovery_sgd);
  CHECK(classify_region(3, 0.35, 1.85, Loss::square) == Region::weak_recovery_sgd);
  CHECK(classify_region(3, -0.35, 1.85, Loss::square) == Region::self_interaction);
  CHECK(classify_region(3, -1.0, 3.0, Loss::square) == Region::one_step);
  CHECK(classify_region(2, 0.0, 1.0, Loss::correlation) == Region::polylog);
  CHECK(classify_region(3, 1.0, 0.0, Loss::square) == Region::not_correlating);
  CHECK(classify_region(3, 0.0, 0.0, Loss::square) == Region::dynamics_undefined);
  CHECK(classify_region(3, 0.0, 0.5, Loss::square) == Region::dynamics_undefined);
  CHECK(classify_region(3, -0.3, 2.5, Loss::square) == Region::critical_line_unaddressed);
  for (int r = 0; r <= 6; ++r)
    CHECK(parse_region(region_name(static_cast<Region>(r))) == static_cast<Region>(r));
}

TEST_CASE("phase diagram invariants on a 200x200 grid") {
  for (int ell = 1; ell <= 4; ++ell) {
    const double mu_crit = std::max(ell - 1.0, 1.0);
    bool strict = false;
    for (Loss loss : {Loss::square, Loss::correlation}) {
      for (int i = 0; i < 200; ++i) {
        const double mu = 4.0 * i / 199.0;
        bool prev_sq = false;
        for (int j = 0; j < 200; ++j) {
          const double delta = -2.0 + 4.0 * j / 199.0;
          const Region r = classify_region(ell, delta, mu, loss);
          CHECK(static_cast<int>(r) >= 0);
          if (ell <= 2) CHECK(r != Region::self_interaction);
          const bool sq = square_achievable(ell, delta, mu);
          const bool co = correlation_achievable(ell, delta, mu);
          // Upward closed in δ.
          if (prev_sq) CHECK(sq);
          prev_sq = sq;
          if (r != Region::one_step && !achievable(ell, delta, mu, loss))
            CHECK_THROWS_AS(predicted_time_exponent(ell, delta, mu, loss), Error);
          else
            CHECK_NOTHROW(predicted_time_exponent(ell, delta, mu, loss));
          if (mu < mu_crit) {
            if (sq) CHECK(co);
            if (ell <= 2) CHECK(sq == co);
            strict = strict || (co && !sq);
          }
        }
      }
    }
    CHECK(strict == (ell >= 3));
  }
}

TEST_CASE("printed GLM expansions against kernel-derived terms") {
  const Activation he2 = Activation::hermite(2), he3 = Activation::hermite(3);
  for (double m : {0.01, 0.05, 0.1, 0.3, 0.5}) {
    for (double noise : {0.0, 0.7}) {
      const OdeModel m2{KernelSet(he2, he2), noise, Loss::square};
      const OdeModel m3{KernelSet(he3, he3), noise, Loss::square};
      const SufficientStats s = SufficientStats::glm(m);
      const auto e2 = glm_printed_expansion(2, m, noise);
      const auto e3 = glm_printed_expansion(3, m, noise);

      // Population drift: ψ − (m/2)·2φGF.
      auto pop = [&](const OdeModel& om) {
        return psi_matrix(om, s)(0, 0) - m * phi_gf_matrix(om, s)(0, 0);
      };
      CHECK(pop(m2) == doctest::Approx(e2.population).epsilon(1e-10));
      CHECK(pop(m3) == doctest::Approx(e3.population).epsilon(1e-10));

      // Batch-correlation part −(m/2)φBC: He2 agrees; He3 differs in the m⁴ and m⁵ signs.
      const double bc2 = 0.5 * m * phi_bc_matrix(m2, s).value(0, 0);
      const double bc3 = 0.5 * m * phi_bc_matrix(m3, s).value(0, 0);
      CHECK(bc2 == doctest::Approx(e2.batch_correlation).epsilon(1e-9));
      CHECK(bc3 == doctest::Approx(162 * m - 324 * std::pow(m, 4) + 162 * std::pow(m, 5)).epsilon(1e-9));
      CHECK(e3.batch_correlation - bc3 == doctest::Approx(648 * std::pow(m, 4) - 324 * std::pow(m, 5)));

      // High-dimensional part −(m/2)φHD: He3 agrees up to the noise monomial, He2 has the opposite sign.
      const double hd2 = -0.5 * m * phi_hd_matrix(m2, s)(0, 0);
      const double hd3 = -0.5 * m * phi_hd_matrix(m3, s)(0, 0);
      CHECK(hd2 == doctest::Approx(-24 * m + 24 * m * m * m - 2 * noise * m).epsilon(1e-9));
      CHECK(hd3 - e3.high_dim == doctest::Approx(-9 * noise * m + 9 * noise * m * m * m));
    }
  }
}

TEST_CASE("printed increment combines the scaled pieces") {
  ScalingRegime r;
  r.gamma0 = 0.5;
  r.delta = 0.25;
  r.n0 = 2.0;
  r.mu = 1.0;
  r.d = 256;
  const auto e = glm_printed_expansion(3, 0.3, 0.1);
  const double d = 256.0;
  const double want = 0.5 * std::pow(d, -0.25) *
                      (e.population - std::pow(d, -0.25) * 0.5 * e.batch_correlation +
                       std::pow(d, -0.25) * 0.25 * e.high_dim);
  CHECK(glm_printed_increment(3, 0.3, 0.1, r) == doctest::Approx(want).epsilon(1e-14));
  r.mu = 0.0;
  r.delta = 1.0;
  const double want0 = 0.5 / d * (e.population + 0.25 * e.high_dim);
  CHECK(glm_printed_increment(3, 0.3, 0.1, r) == doctest::Approx(want0).epsilon(1e-14));
  CHECK_THROWS_AS(glm_printed_expansion(4, 0.3, 0.0), Error);
}
