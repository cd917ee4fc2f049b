#include <cmath>
#include <vector>

#include "doctest.h"
#include "mindex/error.hpp"
#include "mindex/kernels.hpp"
#include "mindex/ode.hpp"
#include "mindex/sgd.hpp"

using namespace mindex;

namespace {

ScalingRegime regime(double gamma0, double delta, double n0, double mu, std::int64_t d) {
  ScalingRegime r;
  r.gamma0 = gamma0;
  r.delta = delta;
  r.n0 = n0;
  r.mu = mu;
  r.d = d;
  return r;
}

TeacherModel teacher(int k, std::int64_t d, const Activation& act, double noise = 0.0,
                     std::uint64_t seed = 3) {
  Stream rng(seed, 1);
  return TeacherModel::orthonormal(k, d, act, noise, rng);
}

StudentModel warm_student(const TeacherModel& t, int p, double m0, const Activation& act,
                          std::uint64_t seed = 4) {
  Stream rng(seed, 2);
  InitSpec init;
  init.mode = InitMode::warm;
  init.m0 = m0;
  return init_student(p, act, init, t, rng);
}

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("teacher rows are orthonormal and labels follow the committee") {
  const TeacherModel t = teacher(3, 40, Activation::hermite(2));
  CHECK((t.w_star * t.w_star.transpose() - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  Eigen::MatrixXd fields(1, 3);
  fields << 1.0, 2.0, -0.5;
  CHECK(t.labels(fields)(0) == doctest::Approx((0.0 + 3.0 + -0.75) / 3.0));

  Stream rng(1, 1);
  const TeacherModel tp = TeacherModel::orthonormal(2, 10, Activation::tanh_of_product(), 0.0, rng);
  Eigen::MatrixXd f2(1, 2);
  f2 << 0.5, 0.8;
  CHECK(tp.labels(f2)(0) == doctest::Approx(std::tanh(0.4)));
}

TEST_CASE("batch gradient matches finite differences of the batch loss") {
  const Activation act = Activation::hermite(3);
  const TeacherModel t = teacher(2, 6, act, 0.1);
  Stream rng(9, 9);
  StudentModel s = init_student(2, act, InitSpec{}, t, rng);
  s.a << 1.3, -0.7;
  Stream data(5, 1), noise(5, 2);
  const Batch b = sample_batch(t, 7, data, noise);
  for (Loss loss : {Loss::square, Loss::correlation}) {
    const Eigen::MatrixXd G = batch_gradient(s, b, loss);
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 6; ++i) {
        StudentModel up = s, dn = s;
        up.w(j, i) += h;
        dn.w(j, i) -= h;
        const double fd = (batch_loss(up, b, loss) - batch_loss(dn, b, loss)) / (2 * h);
        CHECK(G(j, i) == doctest::Approx(fd).epsilon(1e-5));
      }
  }
}

TEST_CASE("updates keep rows on the sphere and report zero-norm collapse") {
  const Activation act = Activation::hermite(3);
  const TeacherModel t = teacher(1, 30, act);
  StudentModel s = warm_student(t, 2, 0.2, act);
  Eigen::MatrixXd G = Eigen::MatrixXd::Random(2, 30);
  step_projected(s, G, 0.3);
  CHECK(s.w.rowwise().norm().isApprox(Eigen::VectorXd::Ones(2)));
  step_spherical(s, G, 0.3);
  CHECK(s.w.rowwise().norm().isApprox(Eigen::VectorXd::Ones(2)));

  StudentModel z = warm_student(t, 1, 0.2, act);
  try {
    step_projected(z, z.w, 1.0);
    FAIL("expected zero_norm_update");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_norm_update);
  }
}

TEST_CASE("initializations realize the requested overlaps") {
  const Activation act = Activation::hermite(3);
  const TeacherModel t1 = teacher(1, 200, act);
  const StudentModel w = warm_student(t1, 3, 0.35, act);
  for (int j = 0; j < 3; ++j) CHECK(w.w.row(j).dot(t1.w_star.row(0)) == doctest::Approx(0.35));

  const TeacherModel t2 = teacher(2, 50, Activation::erf_scaled());
  InitSpec init;
  init.mode = InitMode::warm_matrix;
  init.M.resize(2, 2);
  init.M << 0.3, 0.1, 0.1, 0.3;
  Stream rng(7, 7);
  const StudentModel wm = init_student(2, Activation::erf_scaled(), init, t2, rng);
  CHECK((wm.w * t2.w_star.transpose() - init.M).norm() < 1e-12);
  CHECK(wm.w.rowwise().norm().isApprox(Eigen::VectorXd::Ones(2)));
  const double q12 = wm.w.row(0).dot(wm.w.row(1));
  CHECK(q12 == doctest::Approx(0.3 * 0.1 + 0.1 * 0.3));

  InitSpec bad = init;
  bad.M << 0.9, 0.9, 0.0, 0.0;
  CHECK_THROWS_AS(init_student(2, Activation::erf_scaled(), bad, t2, rng), Error);
}

TEST_CASE("cold start overlap has variance 1/d and sign-fixed start is positive") {
  const Activation act = Activation::hermite(3);
  const std::int64_t d = 100;
  const TeacherModel t = teacher(1, d, act);
  std::vector<double> dm2;
  for (int r = 0; r < 2000; ++r) {
    Stream rng(11, static_cast<std::uint64_t>(r));
    const StudentModel s = init_student(1, act, InitSpec{}, t, rng);
    const double m = s.w.row(0).dot(t.w_star.row(0));
    dm2.push_back(d * m * m);
  }
  // E[d m²] = 1 exactly for a uniform unit vector; sd of the mean ≈ √(2/2000).
  CHECK(std::abs(moments(dm2).mean - 1.0) < 0.12);

  InitSpec sf;
  sf.mode = InitMode::sign_fixed_cold;
  for (int r = 0; r < 50; ++r) {
    Stream rng(12, static_cast<std::uint64_t>(r));
    const StudentModel s = init_student(1, act, sf, t, rng);
    CHECK(s.w.row(0).dot(t.w_star.row(0)) > 0.0);
  }
}

TEST_CASE("one-step raw moments match the drift kernels") {
  // E[w'·w*] and E[|w'|²] before normalization equal the unnormalized full-process update.
  const Activation act = Activation::hermite(3);
  const std::int64_t d = 12, n_b = 4;
  const double gamma = 0.05, m0 = 0.4, noise = 0.2;
  const TeacherModel t = teacher(1, d, act, noise);
  const StudentModel s = warm_student(t, 1, m0, act);
  const OdeModel model{KernelSet(act, act), noise, Loss::square};
  const SufficientStats st = SufficientStats::glm(m0);
  const double psi = psi_matrix(model, st)(0, 0);
  const double phi_gf = phi_gf_matrix(model, st)(0, 0);
  const double phi_hd = phi_hd_matrix(model, st)(0, 0);
  const double phi_bc = phi_bc_matrix(model, st).value(0, 0);
  const double want_m = m0 + gamma * psi;
  // φHD carries the d-dimensional |z|² as d; the two span directions deviate from 1 in
  // E[(Eσ')² |z_span|²], which is O(1/d) and sampled here in two dimensions.
  double span_excess = 0.0;
  {
    Stream rng(31, 1);
    const int n = 2000000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal(), y = rng.normal(), xi = rng.normal();
      const double lam = m0 * x + std::sqrt(1 - m0 * m0) * y;
      const double e = act.value(x) + std::sqrt(noise) * xi - act.value(lam);
      const double g = e * act.derivative(lam);
      span_excess += g * g * (x * x + y * y - 2.0);
    }
    span_excess /= n;
  }
  const double want_q = 1.0 + 2 * gamma * phi_gf +
                        gamma * gamma * (static_cast<double>(d) * phi_hd + span_excess) / n_b +
                        gamma * gamma * (1.0 - 1.0 / n_b) * phi_bc;

  std::vector<double> ms, qs;
  const int reps = 200000;
  for (int r = 0; r < reps; ++r) {
    Stream data(21, static_cast<std::uint64_t>(r)), nz(22, static_cast<std::uint64_t>(r));
    const Batch b = sample_batch(t, n_b, data, nz);
    const Eigen::RowVectorXd w = s.w.row(0) - gamma * batch_gradient(s, b, Loss::square).row(0);
    ms.push_back(w.dot(t.w_star.row(0)));
    qs.push_back(w.squaredNorm());
  }
  const Moments mm = moments(ms), mq = moments(qs);
  CHECK(std::abs(mm.mean - want_m) < 5 * std::sqrt(mm.var / reps));
  CHECK(std::abs(mq.mean - want_q) < 5 * std::sqrt(mq.var / reps));
}

TEST_CASE("projected and explicit samplers agree in distribution") {
  const Activation act = Activation::hermite(3);
  const std::int64_t d = 16;
  const TeacherModel t = teacher(1, d, act, 0.1);
  const StudentModel s0 = warm_student(t, 2, 0.3, act);
  auto collect = [&](Sampler sampler) {
    std::vector<double> m, c;
    for (int r = 0; r < 6000; ++r) {
      TrainConfig cfg;
      cfg.regime = regime(0.2, 0.0, 5.0, 0.0, d);
      cfg.t_max = 1;
      cfg.eta = 0.999;
      cfg.sampler = sampler;
      cfg.seed = 100;
      cfg.run_index = static_cast<std::uint64_t>(r);
      Trajectory tr = run(t, s0, cfg);
      m.push_back(tr.points.back().M(0, 0));
      c.push_back(tr.points.back().M(1, 0));
    }
    return std::pair{moments(m), moments(c)};
  };
  const auto [pm, pc] = collect(Sampler::projected);
  const auto [em, ec] = collect(Sampler::explicit_gaussian);
  const double se = std::sqrt((pm.var + em.var) / 6000);
  CHECK(std::abs(pm.mean - em.mean) < 5 * se);
  CHECK(pm.var / em.var == doctest::Approx(1.0).epsilon(0.1));
  CHECK(pc.var / ec.var == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("runs are deterministic, one-pass, and seed-separated") {
  const Activation act = Activation::hermite(3);
  ProblemSpec prob;
  TrainConfig cfg;
  cfg.regime = regime(0.5, 0.5, 2.0, 0.5, 64);
  cfg.t_max = 40;
  cfg.eta = 0.99;
  cfg.record_stride = 7;
  cfg.seed = 77;
  const Trajectory a = run_problem(prob, cfg);
  const Trajectory b = run_problem(prob, cfg);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].overlap == b.points[i].overlap);
  CHECK(a.steps_taken == 40);
  CHECK(a.censored);
  CHECK(a.samples_consumed == 40 * cfg.regime.n_b());
  CHECK(a.points.front().t == 0);
  CHECK(a.points.back().t == 40);
  CHECK(a.points[1].t == 7);

  cfg.run_index = 1;
  const Trajectory c = run_problem(prob, cfg);
  CHECK(c.points.back().overlap != a.points.back().overlap);
}

TEST_CASE("recovery time is the first step at or above eta") {
  ProblemSpec prob;
  TrainConfig cfg;
  cfg.regime = regime(0.0005, 0.0, 1.0, 1.0, 64);
  cfg.init.mode = InitMode::warm;
  cfg.init.m0 = 0.4;
  cfg.t_max = 2000;
  cfg.eta = 0.9;
  cfg.stop_at_recovery = false;
  const Trajectory tr = run_problem(prob, cfg);
  REQUIRE(tr.t_eta_plus.has_value());
  for (const auto& pt : tr.points) {
    if (pt.t < *tr.t_eta_plus) CHECK(pt.overlap < 0.9);
    if (pt.t == *tr.t_eta_plus) CHECK(pt.overlap >= 0.9);
  }
  cfg.stop_at_recovery = true;
  const Trajectory stop = run_problem(prob, cfg);
  CHECK(stop.steps_taken == *tr.t_eta_plus);
  CHECK(stop.t_eta_plus == tr.t_eta_plus);
}

TEST_CASE("correlation loss never evaluates the student's prediction") {
  ProblemSpec prob;
  TrainConfig cfg;
  cfg.loss = Loss::correlation;
  cfg.regime = regime(0.5, 0.5, 1.0, 1.0, 64);
  cfg.t_max = 30;
  const std::int64_t before = predict_call_count();
  (void)run_problem(prob, cfg);
  CHECK(predict_call_count() == before);
  cfg.loss = Loss::square;
  (void)run_problem(prob, cfg);
  CHECK(predict_call_count() > before);
}

TEST_CASE("Monte Carlo test risk agrees with the analytic risk") {
  ProblemSpec prob;
  prob.p = 2;
  prob.noise = 0.3;
  TrainConfig cfg;
  cfg.regime = regime(0.1, 0.5, 1.0, 1.0, 64);
  cfg.init.mode = InitMode::warm;
  cfg.init.m0 = 0.5;
  cfg.t_max = 1;
  cfg.eta = 0.999;
  cfg.test_risk = RiskMode::analytic;
  const Trajectory an = run_problem(prob, cfg);
  cfg.test_risk = RiskMode::mc;
  cfg.n_test = 200000;
  const Trajectory mc = run_problem(prob, cfg);
  const double diff = std::abs(an.points[0].risk - mc.points[0].risk);
  CHECK(an.points[0].risk_stderr == 0.0);
  CHECK(diff < 5 * mc.points[0].risk_stderr);

  prob.student = Activation::tanh();
  cfg.test_risk = RiskMode::analytic;
  CHECK_THROWS_AS(run_problem(prob, cfg), Error);
}

TEST_CASE("adaptive schedule switches to square loss and decays the step size") {
  ProblemSpec prob;
  TrainConfig cfg;
  cfg.regime = regime(0.3, 0.0, 4.0, 1.0, 64);
  cfg.adaptive = AdaptiveSchedule{};
  cfg.init.mode = InitMode::sign_fixed_cold;
  cfg.t_max = 2000;
  cfg.eta = 0.95;
  const Trajectory tr = run_problem(prob, cfg);
  REQUIRE(tr.switch_step.has_value());
  const auto& last = tr.points.back();
  CHECK(last.gamma < cfg.regime.gamma());
  const double k = static_cast<double>(last.t - *tr.switch_step);
  CHECK(last.gamma == doctest::Approx(cfg.regime.gamma() * std::pow(0.995, k)));
}

TEST_CASE("configuration errors are rejected") {
  TrainConfig cfg;
  cfg.regime = regime(1, 0, 1, 1, 32);
  cfg.eta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(parse_init_mode("hot"), Error);
  CHECK(parse_sampler("explicit") == Sampler::explicit_gaussian);
  CHECK(std::string(risk_mode_name(parse_risk_mode("auto"))) == "auto");
}
