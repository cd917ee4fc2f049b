#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mindex/config.hpp"
#include "mindex/error.hpp"
#include "mindex/experiments.hpp"
#include "mindex/io.hpp"
#include "mindex/kernels.hpp"
#include "mindex/ode.hpp"
#include "mindex/theory.hpp"

#ifndef MINDEX_VERSION
#define MINDEX_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace mindex;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = "out";
  unsigned jobs = 0;
  std::optional<std::uint64_t> seed;
  bool resume = false;
};

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hex(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

// --seed, then the config's seed key, then MINDEX_SEED, then 1.
std::uint64_t resolve_seed(const Common& c, const Config& cfg) {
  if (c.seed) return *c.seed;
  if (cfg.has("seed")) return cfg.get_u64("seed", 1);
  if (const char* env = std::getenv("MINDEX_SEED")) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(Errc::config, std::string("MINDEX_SEED is not an unsigned integer: '") + env + "'");
  }
  return 1;
}

Config load_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config::parse("") : Config::load(c.config_path);
  for (const auto& s : c.sets) cfg.set(s);
  return cfg;
}

Manifest base_manifest(const std::string& sub, const Config& cfg, std::uint64_t seed, const std::string& start) {
  Manifest m;
  m.set("subcommand", sub);
  m.set("version", MINDEX_VERSION);
  m.set("config_hash", hex(cfg.hash()));
  m.set("master_seed", std::to_string(seed));
  m.set("start_time", start);
  m.set("config_file", "config.cfg");
  return m;
}

void add_regime(Manifest& m, const ScalingRegime& r) {
  m.set("d", std::to_string(r.d));
  m.set("delta", format_real(r.delta));
  m.set("mu", format_real(r.mu));
  m.set("gamma", format_real(r.gamma()));
  m.set("n_b", std::to_string(r.n_b()));
}

void finish(Manifest& m, const fs::path& dir, const Config& cfg) {
  write_file((dir / "config.cfg").string(), cfg.canonical());
  m.set("end_time", timestamp());
  m.write((dir / "manifest.txt").string());
}

int cmd_simulate(const Common& c) {
  const std::string start = timestamp();
  const Config cfg = load_config(c);
  const std::uint64_t seed = resolve_seed(c, cfg);
  const RunSetup setup = build_setup(cfg, seed);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const Trajectory tr = run_problem(setup.problem, setup.train);
  std::ofstream f(dir / "trajectory.csv", std::ios::binary);
  write_trajectory_csv(f, tr, setup.problem.p, setup.problem.k);
  if (!f) throw Error(Errc::io, "write failed for trajectory.csv");
  Manifest m = base_manifest("simulate", cfg, seed, start);
  add_regime(m, setup.train.regime);
  m.set("outputs", "trajectory.csv");
  m.set("t_eta_plus", tr.t_eta_plus ? std::to_string(*tr.t_eta_plus) : "censored");
  m.set("steps", std::to_string(tr.steps_taken));
  m.set("samples_consumed", std::to_string(tr.samples_consumed));
  m.set("final_overlap", format_real(tr.final_overlap));
  m.set("wall_time_s", format_real(tr.wall_time_s));
  finish(m, dir, cfg);
  return 0;
}

int cmd_ode(const Common& c) {
  const std::string start = timestamp();
  const Config cfg = load_config(c);
  const std::uint64_t seed = resolve_seed(c, cfg);
  const RunSetup setup = build_setup(cfg, seed);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const OdeModel model{KernelSet(setup.problem.student, setup.problem.teacher, setup.ode.mc_samples, seed),
                       setup.problem.noise, setup.train.loss};
  const SufficientStats s0 = setup.ode_initial_state();
  const ScalingRegime& r = setup.train.regime;
  OdeTrajectory tr;
  if (setup.ode.mode == OdeMode::asymptotic)
    tr = integrate(model, s0, r, setup.ode.tau_max, setup.ode.integrate);
  else
    tr = iterate_full_process(model, s0, r, setup.ode.steps, setup.ode.record_stride, setup.train.eta);
  std::ofstream f(dir / "ode.csv", std::ios::binary);
  write_ode_csv(f, tr);
  if (!f) throw Error(Errc::io, "write failed for ode.csv");
  Manifest m = base_manifest("ode", cfg, seed, start);
  add_regime(m, r);
  m.set("mode", ode_mode_name(setup.ode.mode));
  m.set("outputs", "ode.csv");
  m.set("tau_eta", tr.tau_eta ? format_real(*tr.tau_eta) : "none");
  if (tr.regularized) m.set("regularized", "true");
  if (tr.frozen) {
    const std::string w = "frozen dynamics: no indicator active at delta=" + format_real(r.delta) +
                          ", mu=" + format_real(r.mu);
    std::cerr << "warning: " << w << '\n';
    m.set("warning", w);
  }
  finish(m, dir, cfg);
  return 0;
}

int cmd_sweep(const Common& c) {
  const std::string start = timestamp();
  const Config cfg = load_config(c);
  const std::uint64_t seed = resolve_seed(c, cfg);
  const RunSetup setup = build_setup(cfg, seed);
  const SweepSpec spec = setup.sweep_spec();
  spec.validate();
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const fs::path records_path = dir / "records.jsonl";
  const fs::path manifest_path = dir / "manifest.txt";

  std::vector<SweepRecord> previous;
  if (c.resume && fs::exists(manifest_path)) {
    const auto old = Manifest::read(manifest_path.string());
    const auto it = old.find("config_hash");
    if (it == old.end() || it->second != hex(cfg.hash()))
      throw Error(Errc::config, "--resume: configuration differs from the interrupted sweep");
    if (old.count("master_seed") && old.at("master_seed") != std::to_string(seed))
      throw Error(Errc::config, "--resume: master seed differs from the interrupted sweep");
    previous = read_sweep_records(records_path.string());
  } else if (fs::exists(records_path)) {
    fs::remove(records_path);
  }

  Manifest m = base_manifest("sweep", cfg, seed, start);
  m.set("status", "running");
  m.set("outputs", "records.jsonl,fits.jsonl");
  m.write(manifest_path.string());

  SweepOptions opt;
  opt.jobs = c.jobs ? c.jobs : std::max(1u, std::thread::hardware_concurrency());
  for (const auto& r : previous) opt.skip.insert({r.cell, r.seed});
  // Rewrite the completed part so a truncated trailing line does not survive.
  {
    std::string s;
    for (const auto& r : previous) s += sweep_record_json(r, spec.base.loss) + "\n";
    write_file(records_path.string(), s);
  }
  std::ofstream append(records_path, std::ios::binary | std::ios::app);
  opt.on_record = [&](const SweepRecord& r) {
    append << sweep_record_json(r, spec.base.loss) << '\n' << std::flush;
  };
  std::vector<SweepRecord> fresh = run_sweep(spec, opt);
  append.close();

  std::vector<SweepRecord> all = previous;
  all.insert(all.end(), fresh.begin(), fresh.end());
  std::sort(all.begin(), all.end(),
            [](const SweepRecord& a, const SweepRecord& b) { return std::pair(a.cell, a.seed) < std::pair(b.cell, b.seed); });
  std::string recs;
  std::size_t failures = 0;
  for (const auto& r : all) {
    recs += sweep_record_json(r, spec.base.loss) + "\n";
    if (r.error) {
      ++failures;
      std::cerr << "cell " << r.cell << " seed " << r.seed << ": " << *r.error << '\n';
    }
  }
  write_file(records_path.string(), recs);
  std::string fits;
  for (const auto& s : fit_by_cell(all, setup.sweep.fit_model)) fits += fit_summary_json(s) + "\n";
  write_file((dir / "fits.jsonl").string(), fits);

  m.set("status", "complete");
  m.set("records", std::to_string(all.size()));
  m.set("failures", std::to_string(failures));
  m.set("resumed_records", std::to_string(previous.size()));
  m.set("jobs", std::to_string(opt.jobs));
  finish(m, dir, cfg);
  return !all.empty() && failures == all.size() ? kExitRuntime : 0;
}

struct TheoryArgs {
  int ell = 3;
  double delta = 0.0;
  double mu = 0.0;
  std::string loss = "square";
  bool grid = false;
  int grid_n = 41;
};

std::string theory_row(int ell, double delta, double mu, Loss loss) {
  std::ostringstream os;
  os << ell << ',' << loss_name(loss) << ',' << format_real(delta) << ',' << format_real(mu) << ','
     << region_name(classify_region(ell, delta, mu, loss)) << ','
     << (achievable(ell, delta, mu, loss) ? "true" : "false") << ','
     << format_real(optimal_delta(ell, mu, loss)) << ',';
  try {
    const TimeExponent te = predicted_time_exponent(ell, delta, mu, loss);
    os << format_real(te.theta) << ',' << (te.log_factor ? "true" : "false");
  } catch (const Error& e) {
    if (e.code() != Errc::outside_region) throw;
    os << ",";
  }
  return os.str();
}

int cmd_theory(const Common& c, const TheoryArgs& t) {
  if (t.ell < 1) throw Error(Errc::config, "--ell must be a positive integer");
  if (t.grid_n < 2) throw Error(Errc::config, "--grid-n must be at least 2");
  const Loss loss = [&] {
    try {
      return parse_loss(t.loss);
    } catch (const Error& e) {
      throw Error(Errc::config, e.detail());
    }
  }();
  if (t.mu < 0) throw Error(Errc::config, "--mu must be nonnegative");
  std::string table = "ell,loss,delta,mu,region,achievable,optimal_delta,theta,log_factor\n";
  if (t.grid) {
    // μ ∈ [0, 2ℓ], δ ∈ [−ℓ, ℓ].
    for (int i = 0; i < t.grid_n; ++i)
      for (int j = 0; j < t.grid_n; ++j) {
        const double mu = 2.0 * t.ell * i / (t.grid_n - 1);
        const double delta = -t.ell + 2.0 * t.ell * j / (t.grid_n - 1);
        table += theory_row(t.ell, delta, mu, loss) + "\n";
      }
  } else {
    table += theory_row(t.ell, t.delta, t.mu, loss) + "\n";
  }
  if (c.out.empty() || c.out == "-") {
    std::cout << table;
  } else {
    fs::create_directories(c.out);
    write_file((fs::path(c.out) / "theory.csv").string(), table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-student SGD simulations, order-parameter ODEs and phase-diagram theory"};
  app.set_version_flag("--version", MINDEX_VERSION);
  app.require_subcommand(1);
  Common common;
  TheoryArgs targs;

  auto add_common = [&](CLI::App* sub, bool with_out_default) {
    sub->add_option("--config", common.config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--set", common.sets, "override KEY=VALUE (repeatable)");
    sub->add_option("--out", common.out, with_out_default ? "output directory" : "output directory (default: stdout)");
    sub->add_option("--jobs", common.jobs, "worker threads (default: available parallelism)");
    sub->add_option("--seed", common.seed, "master seed (overrides config seed and MINDEX_SEED)");
    sub->add_flag("--resume", common.resume, "continue an interrupted sweep in --out");
  };
  CLI::App* sim = app.add_subcommand("simulate", "one SGD run; writes trajectory.csv");
  CLI::App* ode = app.add_subcommand("ode", "ODE or full finite-d process; writes ode.csv");
  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs; writes records.jsonl and fits.jsonl");
  CLI::App* theory = app.add_subcommand("theory", "region labels, optimal delta and time exponents");
  add_common(sim, true);
  add_common(ode, true);
  add_common(sweep, true);
  theory->add_option("--out", common.out, "directory for theory.csv (default: stdout)");
  theory->add_option("--ell", targs.ell, "information exponent");
  theory->add_option("--delta", targs.delta, "learning-rate exponent");
  theory->add_option("--mu", targs.mu, "batch-size exponent");
  theory->add_option("--loss", targs.loss, "square | correlation");
  theory->add_flag("--grid", targs.grid, "tabulate mu in [0, 2l], delta in [-l, l]");
  theory->add_option("--grid-n", targs.grid_n, "grid points per axis");
  app.footer("Config keys:\n" + config_reference());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (theory->parsed() && std::find(argv, argv + argc, std::string("--out")) == argv + argc) common.out = "-";

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (ode->parsed()) return cmd_ode(common);
    if (sweep->parsed()) return cmd_sweep(common);
    return cmd_theory(common, targs);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
