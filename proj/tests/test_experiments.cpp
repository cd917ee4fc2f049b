#include <cmath>

#include "doctest.h"
#include "mindex/error.hpp"
#include "mindex/experiments.hpp"

using namespace mindex;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.problem.student = s.problem.teacher = Activation::hermite(2);
  s.base.regime.gamma0 = 0.05;
  s.base.regime.n0 = 1.0;
  s.base.init.mode = InitMode::warm;
  s.base.init.m0 = 0.3;
  s.base.eta = 0.6;
  s.base.seed = 17;
  s.ds = {32, 64};
  s.deltas = {0.0, 0.5};
  s.mus = {1.0};
  s.seeds = 5;
  s.t_max = 200;
  return s;
}

SweepRecord synthetic(std::int64_t d, double t) {
  SweepRecord r;
  r.d = d;
  r.t_eta_plus = static_cast<std::int64_t>(t);
  r.censored = false;
  return r;
}

}  // namespace

TEST_CASE("cells and run indices") {
  const SweepSpec s = small_spec();
  const auto cells = sweep_cells(s);
  REQUIRE(cells.size() == 4);
  CHECK(cells[1].d == 32);
  CHECK(cells[1].delta == 0.5);
  CHECK(cells[2].d == 64);
  CHECK(sweep_run_index(0, 0) == 0);
  CHECK(sweep_run_index(2, 3) == ((std::uint64_t{2} << 32) | 3));
}

TEST_CASE("sweep cardinality, determinism and parallel independence") {
  const SweepSpec s = small_spec();
  const auto a = run_sweep(s);
  REQUIRE(a.size() == 20);
  SweepOptions par;
  par.jobs = 3;
  const auto b = run_sweep(s, par);
  REQUIRE(b.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].cell == b[i].cell);
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].t_eta_plus == b[i].t_eta_plus);
    CHECK(a[i].final_overlap == b[i].final_overlap);
    CHECK_FALSE(a[i].error.has_value());
    CHECK_FALSE(a[i].wall_time_s.has_value());
    CHECK(a[i].region == (a[i].delta == 0.0 ? Region::polylog : Region::weak_recovery_sgd));
  }
}

TEST_CASE("single-cell sweep equals a direct run") {
  SweepSpec s = small_spec();
  s.ds = {64};
  s.deltas = {0.0};
  s.seeds = 1;
  const auto recs = run_sweep(s);
  REQUIRE(recs.size() == 1);
  TrainConfig cfg = s.base;
  cfg.regime.d = 64;
  cfg.regime.delta = 0.0;
  cfg.regime.mu = 1.0;
  cfg.t_max = 200;
  const Trajectory tr = run_problem(s.problem, cfg);
  CHECK(recs[0].t_eta_plus == tr.t_eta_plus);
  CHECK(recs[0].final_overlap == tr.final_overlap);
  CHECK(recs[0].steps == tr.steps_taken);
}

TEST_CASE("resume skips completed records and failures are isolated") {
  SweepSpec s = small_spec();
  SweepOptions opt;
  opt.skip = {{0, 0}, {0, 1}, {3, 4}};
  int seen = 0;
  opt.on_record = [&](const SweepRecord&) { ++seen; };
  const auto recs = run_sweep(s, opt);
  CHECK(recs.size() == 17);
  CHECK(seen == 17);
  for (const auto& r : recs) CHECK_FALSE((r.cell == 0 && r.seed <= 1));

  s.base.init.mode = InitMode::warm_matrix;  // M left empty: every run fails at setup
  const auto bad = run_sweep(s);
  REQUIRE(bad.size() == 20);
  for (const auto& r : bad) CHECK(r.error.has_value());
}

TEST_CASE("default budget rule") {
  ScalingRegime r;
  r.gamma0 = 0.5;
  r.delta = 0.0;
  r.mu = 1.5;
  r.n0 = 1.0;
  r.d = 100;
  CHECK(default_budget(3, r, Loss::square) == 1000);  // 50 · 100^0.5 / 0.5
  r.delta = -0.35;
  r.mu = 1.85;
  CHECK(default_budget(3, r, Loss::square) == static_cast<std::int64_t>(std::ceil(1e6 / r.n_b())));
}

TEST_CASE("fitter self-tests") {
  std::vector<double> ds = {128, 256, 512, 1024}, pow_t, log_t;
  for (double d : ds) {
    pow_t.push_back(7.0 * std::sqrt(d));
    log_t.push_back(3.0 * std::log(d));
  }
  const FitResult a = fit_points(ds, pow_t, FitModel::log_log);
  CHECK(a.slope == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(a.r2 == doctest::Approx(1.0));
  CHECK(std::exp(a.intercept) == doctest::Approx(7.0));
  const FitResult b = fit_points(ds, log_t, FitModel::lin_log);
  CHECK(b.slope == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(b.r2 == doctest::Approx(1.0));
}

TEST_CASE("fit_scaling medians, censoring and errors") {
  std::vector<SweepRecord> recs;
  for (std::int64_t d : {100, 400, 1600, 6400}) {
    for (double f : {0.5, 1.0, 2.0}) recs.push_back(synthetic(d, f * 10.0 * std::sqrt(double(d))));
  }
  FitResult f = fit_scaling(recs, FitModel::log_log);
  CHECK(f.slope == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(f.groups.size() == 4);

  // A group with more than half censored is excluded from the fit.
  for (int i = 0; i < 4; ++i) {
    SweepRecord c;
    c.d = 6400;
    recs.push_back(c);
  }
  f = fit_scaling(recs, FitModel::log_log);
  CHECK_FALSE(f.groups.back().recovering);
  CHECK(f.slope == doctest::Approx(0.5).epsilon(1e-3));

  std::vector<SweepRecord> two(recs.begin(), recs.begin() + 6);
  try {
    fit_scaling(two, FitModel::log_log);
    FAIL("expected insufficient-data");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_data);
  }
  std::vector<SweepRecord> cens(3);
  for (std::size_t i = 0; i < 3; ++i) cens[i].d = 100 * (i + 1);
  try {
    fit_scaling(cens, FitModel::lin_log);
    FAIL("expected all-censored");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::all_censored);
  }

  const auto sums = fit_by_cell(recs, FitModel::log_log);
  REQUIRE(sums.size() == 1);
  CHECK(sums[0].fit.has_value());
}
