#include "mindex/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "mindex/error.hpp"

namespace mindex {

void SweepSpec::validate() const {
  if (ds.empty() || deltas.empty() || mus.empty())
    throw Error(Errc::invalid_argument, "sweep grids must be nonempty");
  if (seeds < 1) throw Error(Errc::invalid_argument, "seeds per cell must be positive");
  if (t_max && *t_max < 1) throw Error(Errc::invalid_argument, "budget must be positive");
  for (auto d : ds)
    if (d < 1) throw Error(Errc::invalid_argument, "dimensions must be positive");
}

std::vector<SweepCell> sweep_cells(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  for (auto d : spec.ds)
    for (double delta : spec.deltas)
      for (double mu : spec.mus) cells.push_back({cells.size(), d, delta, mu});
  return cells;
}

std::int64_t default_budget(int ell, const ScalingRegime& r, Loss loss) {
  if (ell >= 1 && achievable(ell, r.delta, r.mu, loss)) {
    const TimeExponent te = predicted_time_exponent(ell, r.delta, r.mu, loss);
    const double d = static_cast<double>(r.d);
    double t = std::pow(d, te.theta) / r.gamma0;
    if (te.log_factor) t *= std::log(d);
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(50.0 * t)));
  }
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(1e6 / static_cast<double>(r.n_b()))));
}

namespace {

int target_exponent(const ProblemSpec& problem) {
  if (problem.teacher.is_multi_index()) return 0;
  return information_exponent(hermite_coefficients(problem.teacher));
}

SweepRecord run_one(const SweepSpec& spec, const SweepCell& cell, std::uint64_t seed, int ell) {
  SweepRecord rec;
  rec.cell = cell.index;
  rec.seed = seed;
  rec.d = cell.d;
  rec.delta = cell.delta;
  rec.mu = cell.mu;
  TrainConfig cfg = spec.base;
  cfg.regime.d = cell.d;
  cfg.regime.delta = cell.delta;
  cfg.regime.mu = cell.mu;
  cfg.run_index = sweep_run_index(cell.index, seed);
  try {
    if (ell >= 1) rec.region = classify_region(ell, cell.delta, cell.mu, cfg.loss);
    rec.n_b = cfg.regime.n_b();
    rec.gamma = cfg.regime.gamma();
    cfg.t_max = spec.t_max ? *spec.t_max : default_budget(ell, cfg.regime, cfg.loss);
    rec.t_max = cfg.t_max;
    const Trajectory tr = run_problem(spec.problem, cfg);
    rec.t_eta_plus = tr.t_eta_plus;
    rec.censored = tr.censored;
    rec.steps = tr.steps_taken;
    rec.final_overlap = tr.final_overlap;
    if (spec.record_wall_time) rec.wall_time_s = tr.wall_time_s;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  spec.validate();
  const std::vector<SweepCell> cells = sweep_cells(spec);
  const int ell = target_exponent(spec.problem);

  std::vector<std::pair<const SweepCell*, std::uint64_t>> tasks;
  for (const auto& c : cells)
    for (int s = 0; s < spec.seeds; ++s)
      if (!options.skip.count({c.index, static_cast<std::uint64_t>(s)}))
        tasks.emplace_back(&c, static_cast<std::uint64_t>(s));

  std::vector<SweepRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      out[i] = run_one(spec, *tasks[i].first, tasks[i].second, ell);
      if (options.on_record) {
        std::lock_guard lock(mu);
        options.on_record(out[i]);
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(tasks.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  // Tasks were generated in (cell, seed) order, so out is already sorted.
  return out;
}

const char* fit_model_name(FitModel m) { return m == FitModel::log_log ? "log-log" : "lin-log"; }

FitModel parse_fit_model(const std::string& text) {
  if (text == "log-log" || text == "log_log") return FitModel::log_log;
  if (text == "lin-log" || text == "lin_log") return FitModel::lin_log;
  throw Error(Errc::invalid_argument, "fit model must be log-log or lin-log, got '" + text + "'");
}

FitResult fit_points(const std::vector<double>& ds, const std::vector<double>& times, FitModel model) {
  if (ds.size() != times.size()) throw Error(Errc::invalid_argument, "fit inputs differ in length");
  if (ds.size() < 3) throw Error(Errc::insufficient_data, "need at least 3 points, got " + std::to_string(ds.size()));
  const std::size_t n = ds.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ds[i] > 0.0)) throw Error(Errc::invalid_argument, "dimensions must be positive");
    x[i] = std::log(ds[i]);
    if (model == FitModel::log_log) {
      if (!(times[i] > 0.0)) throw Error(Errc::insufficient_data, "log-log fit needs positive times");
      y[i] = std::log(times[i]);
    } else {
      y[i] = times[i];
    }
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(Errc::insufficient_data, "need at least 2 distinct dimensions");
  FitResult f;
  f.model = model;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

std::vector<GroupMedian> escape_medians(const std::vector<SweepRecord>& records) {
  std::map<std::int64_t, std::vector<const SweepRecord*>> by_d;
  for (const auto& r : records)
    if (!r.error) by_d[r.d].push_back(&r);
  std::vector<GroupMedian> out;
  for (const auto& [d, rs] : by_d) {
    GroupMedian g;
    g.d = d;
    g.runs = rs.size();
    std::vector<double> t;
    for (const auto* r : rs) {
      if (r->censored || !r->t_eta_plus)
        ++g.censored;
      else
        t.push_back(static_cast<double>(*r->t_eta_plus));
    }
    g.recovering = 2 * g.censored <= g.runs && !t.empty();
    if (!t.empty()) {
      std::sort(t.begin(), t.end());
      const std::size_t h = t.size() / 2;
      g.median = t.size() % 2 ? t[h] : 0.5 * (t[h - 1] + t[h]);
    }
    out.push_back(g);
  }
  return out;
}

FitResult fit_scaling(const std::vector<SweepRecord>& records, FitModel model) {
  const std::vector<GroupMedian> groups = escape_medians(records);
  bool any = false;
  std::vector<double> ds, ts;
  for (const auto& g : groups) {
    any = any || g.censored < g.runs;
    if (g.recovering && (model == FitModel::lin_log || g.median > 0.0)) {
      ds.push_back(static_cast<double>(g.d));
      ts.push_back(g.median);
    }
  }
  if (!any) throw Error(Errc::all_censored, "every run is censored");
  if (ds.size() < 3)
    throw Error(Errc::insufficient_data,
                "need 3 recovering dimensions with uncensored medians, have " + std::to_string(ds.size()));
  FitResult f = fit_points(ds, ts, model);
  f.groups = groups;
  return f;
}

std::vector<FitSummary> fit_by_cell(const std::vector<SweepRecord>& records, FitModel model) {
  std::map<std::pair<double, double>, std::vector<SweepRecord>> groups;
  for (const auto& r : records) groups[{r.delta, r.mu}].push_back(r);
  std::vector<FitSummary> out;
  for (const auto& [key, rs] : groups) {
    FitSummary s;
    s.delta = key.first;
    s.mu = key.second;
    try {
      s.fit = fit_scaling(rs, model);
    } catch (const Error& e) {
      s.error = e.what();
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mindex
