#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mindex/experiments.hpp"
#include "mindex/ode.hpp"
#include "mindex/sgd.hpp"

namespace mindex {

inline constexpr int kSchemaVersion = 1;

// 17 significant digits: exact round trip for doubles.
std::string format_real(double x);

// t,overlap_fro,m_11..m_pk,q_11..q_pp,risk,risk_stderr,gamma (q_jj only: rows are unit norm
// under the update, the diagonal is recorded as a check).
std::string trajectory_csv_header(int p, int k);
void write_trajectory_csv(std::ostream& out, const Trajectory& tr, int p, int k);

// tau,m_11..m_pk,q_jl for j ≤ l,risk
std::string ode_csv_header(int p, int k);
void write_ode_csv(std::ostream& out, const OdeTrajectory& tr);

// One JSON object per line, each carrying schema_version.
std::string sweep_record_json(const SweepRecord& r, Loss loss);
SweepRecord parse_sweep_record(const std::string& line);
std::string fit_summary_json(const FitSummary& s);

// Completed (cell, seed) pairs of a partial sweep file; unparsable trailing lines are ignored.
std::vector<SweepRecord> read_sweep_records(const std::string& path);

// key=value lines, keys in insertion order.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value);
  std::string render() const;
  void write(const std::string& path) const;
  static std::map<std::string, std::string> read(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

void write_file(const std::string& path, const std::string& content);

}  // namespace mindex
