#include "mindex/io.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mindex/error.hpp"

namespace mindex {

using nlohmann::json;

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trajectory_csv_header(int p, int k) {
  std::string h = "t,overlap_fro";
  for (int j = 1; j <= p; ++j)
    for (int r = 1; r <= k; ++r) h += ",m_" + std::to_string(j) + std::to_string(r);
  for (int j = 1; j <= p; ++j) h += ",q_" + std::to_string(j) + std::to_string(j);
  return h + ",risk,risk_stderr,gamma";
}

void write_trajectory_csv(std::ostream& out, const Trajectory& tr, int p, int k) {
  out << trajectory_csv_header(p, k) << '\n';
  for (const auto& pt : tr.points) {
    out << pt.t << ',' << format_real(pt.overlap);
    for (int j = 0; j < p; ++j)
      for (int r = 0; r < k; ++r) out << ',' << format_real(pt.M(j, r));
    for (int j = 0; j < p; ++j) out << ',' << format_real(pt.q_diag(j));
    out << ',' << format_real(pt.risk) << ',' << format_real(pt.risk_stderr) << ','
        << format_real(pt.gamma) << '\n';
  }
}

std::string ode_csv_header(int p, int k) {
  std::string h = "tau";
  for (int j = 1; j <= p; ++j)
    for (int r = 1; r <= k; ++r) h += ",m_" + std::to_string(j) + std::to_string(r);
  for (int j = 1; j <= p; ++j)
    for (int l = j; l <= p; ++l) h += ",q_" + std::to_string(j) + std::to_string(l);
  return h + ",risk";
}

void write_ode_csv(std::ostream& out, const OdeTrajectory& tr) {
  if (tr.stats.empty()) throw Error(Errc::invalid_argument, "empty ODE trajectory");
  const int p = tr.stats[0].p(), k = tr.stats[0].k();
  out << ode_csv_header(p, k) << '\n';
  for (std::size_t i = 0; i < tr.stats.size(); ++i) {
    const SufficientStats& s = tr.stats[i];
    out << format_real(tr.tau[i]);
    for (int j = 0; j < p; ++j)
      for (int r = 0; r < k; ++r) out << ',' << format_real(s.M(j, r));
    for (int j = 0; j < p; ++j)
      for (int l = j; l < p; ++l) out << ',' << format_real(s.Q(j, l));
    out << ',' << format_real(tr.risk[i]) << '\n';
  }
}

std::string sweep_record_json(const SweepRecord& r, Loss loss) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "sweep_record";
  j["cell"] = r.cell;
  j["seed"] = r.seed;
  j["d"] = r.d;
  j["delta"] = r.delta;
  j["mu"] = r.mu;
  j["n_b"] = r.n_b;
  j["gamma"] = r.gamma;
  j["loss"] = loss_name(loss);
  j["t_max"] = r.t_max;
  j["t_eta_plus"] = r.t_eta_plus ? json(*r.t_eta_plus) : json(nullptr);
  j["censored"] = r.censored;
  j["steps"] = r.steps;
  j["final_overlap"] = r.final_overlap;
  j["region"] = r.region ? json(region_name(*r.region)) : json(nullptr);
  if (r.wall_time_s) j["wall_time_s"] = *r.wall_time_s;
  if (r.error) j["error"] = *r.error;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

SweepRecord parse_sweep_record(const std::string& line) {
  try {
    const json j = json::parse(line);
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw Error(Errc::io, "unsupported schema_version in sweep record");
    SweepRecord r;
    r.cell = j.at("cell").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.d = j.at("d").get<std::int64_t>();
    r.delta = j.at("delta").get<double>();
    r.mu = j.at("mu").get<double>();
    r.n_b = j.at("n_b").get<std::int64_t>();
    r.gamma = j.at("gamma").get<double>();
    r.t_max = j.at("t_max").get<std::int64_t>();
    if (!j.at("t_eta_plus").is_null()) r.t_eta_plus = j["t_eta_plus"].get<std::int64_t>();
    r.censored = j.at("censored").get<bool>();
    r.steps = j.at("steps").get<std::int64_t>();
    r.final_overlap = j.at("final_overlap").get<double>();
    if (!j.at("region").is_null()) r.region = parse_region(j["region"].get<std::string>());
    if (j.contains("wall_time_s")) r.wall_time_s = j["wall_time_s"].get<double>();
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::io, std::string("malformed sweep record: ") + e.what());
  }
}

std::string fit_summary_json(const FitSummary& s) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "fit_summary";
  j["delta"] = s.delta;
  j["mu"] = s.mu;
  if (s.fit) {
    j["model"] = fit_model_name(s.fit->model);
    j["slope"] = s.fit->slope;
    j["intercept"] = s.fit->intercept;
    j["r2"] = s.fit->r2;
  }
  if (s.error) j["error"] = *s.error;
  json groups = json::array();
  if (s.fit)
    for (const auto& g : s.fit->groups)
      groups.push_back({{"d", g.d}, {"runs", g.runs}, {"censored", g.censored},
                        {"recovering", g.recovering}, {"median_t_eta_plus", g.median}});
  j["groups"] = groups;
  return j.dump();
}

std::vector<SweepRecord> read_sweep_records(const std::string& path) {
  std::ifstream f(path);
  std::vector<SweepRecord> out;
  if (!f) return out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(parse_sweep_record(line));
    } catch (const Error&) {
      // A line cut short by an interrupted run; that record is redone.
    }
  }
  return out;
}

void Manifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

std::string Manifest::render() const {
  std::string s;
  for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
  return s;
}

void Manifest::write(const std::string& path) const { write_file(path, render()); }

std::map<std::string, std::string> Manifest::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot read manifest '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot write '" + path + "'");
  f << content;
  if (!f) throw Error(Errc::io, "write failed for '" + path + "'");
}

}  // namespace mindex
