#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mindex/experiments.hpp"
#include "mindex/ode.hpp"
#include "mindex/sgd.hpp"

namespace mindex {

// Flat "key = value" text with dotted keys; '#' starts a comment. Errors are
// Errc::config with a file:line or key diagnostic.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  // "key=value" override; later overrides win.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // Throws for keys never read through a getter.
  void check_all_used() const;

  // FNV-1a over the sorted "key=value" lines; independent of key order in the file.
  std::uint64_t hash() const;
  std::string canonical() const;

 private:
  struct Entry {
    std::string value;
    std::string where;  // "file:line" or "--set"
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

enum class OdeMode { asymptotic, full_process };
OdeMode parse_ode_mode(const std::string& text);
const char* ode_mode_name(OdeMode m);

struct OdeSetup {
  OdeMode mode = OdeMode::asymptotic;
  double tau_max = 10.0;       // asymptotic
  std::int64_t steps = 1000;   // full_process
  IntegrateOptions integrate;  // step, method, record_every
  std::int64_t record_stride = 1;
  std::int64_t mc_samples = 100000;
  bool teacher_start = false;
};

struct SweepSetup {
  std::vector<std::int64_t> ds;
  std::vector<double> deltas;
  std::vector<double> mus;
  int seeds = 1;
  std::optional<std::int64_t> t_max;
  bool record_wall_time = false;
  FitModel fit_model = FitModel::log_log;
};

struct RunSetup {
  ProblemSpec problem;
  TrainConfig train;
  OdeSetup ode;
  SweepSetup sweep;

  SweepSpec sweep_spec() const;
  // Initial overlaps for the ODE: the teacher configuration, warm overlaps, or the
  // typical cold-start overlap 1/√d.
  SufficientStats ode_initial_state() const;
};

// Reads every documented key, applies defaults, validates. Seed is resolved by the caller.
RunSetup build_setup(const Config& config, std::uint64_t seed);

// Documented keys and defaults, one per line, for --help style output.
std::string config_reference();

}  // namespace mindex
