#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mindex/sgd.hpp"
#include "mindex/theory.hpp"

namespace mindex {

struct SweepSpec {
  ProblemSpec problem;
  TrainConfig base;  // regime.d/delta/mu are replaced per cell; base.seed is the master seed
  std::vector<std::int64_t> ds;
  std::vector<double> deltas;
  std::vector<double> mus;
  int seeds = 1;
  std::optional<std::int64_t> t_max;  // empty: default_budget per cell
  bool record_wall_time = false;

  void validate() const;
};

struct SweepCell {
  std::uint64_t index = 0;
  std::int64_t d = 0;
  double delta = 0.0;
  double mu = 0.0;
};

// Cells ordered d-major, then δ, then μ.
std::vector<SweepCell> sweep_cells(const SweepSpec& spec);

// Cell 0, seed 0 has run index 0, so it reproduces a direct run with the master seed.
inline std::uint64_t sweep_run_index(std::uint64_t cell, std::uint64_t seed) {
  return (cell << 32) | seed;
}

// 50 × predicted steps (d^θ/γ0, times log d when flagged) where theory predicts
// recovery, else 10⁶/n_b.
std::int64_t default_budget(int ell, const ScalingRegime& regime, Loss loss);

struct SweepRecord {
  std::uint64_t cell = 0;
  std::uint64_t seed = 0;
  std::int64_t d = 0;
  double delta = 0.0;
  double mu = 0.0;
  std::int64_t n_b = 0;
  double gamma = 0.0;
  std::int64_t t_max = 0;
  std::optional<std::int64_t> t_eta_plus;
  bool censored = true;
  std::int64_t steps = 0;
  double final_overlap = 0.0;
  std::optional<Region> region;  // empty for multi-index targets
  std::optional<double> wall_time_s;
  std::optional<std::string> error;
};

struct SweepOptions {
  unsigned jobs = 1;
  std::set<std::pair<std::uint64_t, std::uint64_t>> skip;  // completed (cell, seed)
  // Called once per finished record, serialized across workers.
  std::function<void(const SweepRecord&)> on_record;
};

// Records sorted by (cell, seed); failures are captured per record.
std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

enum class FitModel { log_log, lin_log };
const char* fit_model_name(FitModel m);
FitModel parse_fit_model(const std::string& text);

struct GroupMedian {
  std::int64_t d = 0;
  std::size_t runs = 0;
  std::size_t censored = 0;
  bool recovering = false;  // at most half censored
  double median = 0.0;      // over uncensored runs
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  FitModel model = FitModel::log_log;
  std::vector<GroupMedian> groups;
};

// Ordinary least squares of y on x; log-log fits ln T on ln d, lin-log fits T on ln d.
FitResult fit_points(const std::vector<double>& ds, const std::vector<double>& times, FitModel model);

std::vector<GroupMedian> escape_medians(const std::vector<SweepRecord>& records);

// Needs ≥ 3 recovering d-groups with positive medians.
FitResult fit_scaling(const std::vector<SweepRecord>& records, FitModel model);

struct FitSummary {
  double delta = 0.0;
  double mu = 0.0;
  std::optional<FitResult> fit;
  std::optional<std::string> error;
};

// One fit across d per (δ, μ) pair.
std::vector<FitSummary> fit_by_cell(const std::vector<SweepRecord>& records, FitModel model);

}  // namespace mindex
