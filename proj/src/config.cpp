#include "mindex/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mindex/error.hpp"

namespace mindex {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  int dots = 0;
  for (char c : key) {
    if (c == '.') ++dots;
    else if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return dots <= 1;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string where = source + ":" + std::to_string(n);
    std::string body = line.substr(0, line.find('#'));
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(Errc::config, where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!valid_key(key)) throw Error(Errc::config, where + ": invalid key '" + key + "'");
    if (c.entries_.count(key))
      throw Error(Errc::config, where + ": duplicate key '" + key + "' (first at " + c.entries_[key].where + ")");
    c.entries_[key] = {value, where};
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::config, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(Errc::config, "--set expects KEY=VALUE, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw Error(Errc::config, "--set: invalid key '" + key + "'");
  entries_[key] = {value, "--set " + key};
}

const Config::Entry* Config::find(const std::string& key) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void Config::fail(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  const std::string where = it == entries_.end() ? "" : it->second.where + ": ";
  throw Error(Errc::config, where + "key '" + key + "': " + what);
}

std::optional<std::string> Config::raw(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  return e->value;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string& v = e->value;
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    fail(key, "expected a finite number, got '" + v + "'");
  return out;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string& v = e->value;
  std::int64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec == std::errc() && r.ptr == v.data() + v.size()) return out;
  // Accept exact integers written in floating form such as 1e4.
  double d = 0.0;
  const auto rd = std::from_chars(v.data(), v.data() + v.size(), d);
  if (rd.ec == std::errc() && rd.ptr == v.data() + v.size() && d == std::floor(d) && std::abs(d) < 9e18)
    return static_cast<std::int64_t>(d);
  fail(key, "expected an integer, got '" + v + "'");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string& v = e->value;
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    fail(key, "expected an unsigned 64-bit integer, got '" + v + "'");
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  fail(key, "expected true or false, got '" + e->value + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& part : split(e->value, ',')) {
    double x = 0.0;
    const auto r = std::from_chars(part.data(), part.data() + part.size(), x);
    if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size())
      fail(key, "expected a comma-separated list of numbers, got '" + e->value + "'");
    out.push_back(x);
  }
  return out;
}

void Config::check_all_used() const {
  for (const auto& [key, e] : entries_)
    if (!used_.count(key)) throw Error(Errc::config, e.where + ": unknown key '" + key + "'");
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [key, e] : entries_) s += key + "=" + e.value + "\n";
  return s;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

OdeMode parse_ode_mode(const std::string& text) {
  if (text == "asymptotic") return OdeMode::asymptotic;
  if (text == "full_process") return OdeMode::full_process;
  throw Error(Errc::invalid_argument, "ode mode must be asymptotic or full_process, got '" + text + "'");
}

const char* ode_mode_name(OdeMode m) { return m == OdeMode::asymptotic ? "asymptotic" : "full_process"; }

SweepSpec RunSetup::sweep_spec() const {
  SweepSpec s;
  s.problem = problem;
  s.base = train;
  s.ds = sweep.ds;
  s.deltas = sweep.deltas;
  s.mus = sweep.mus;
  s.seeds = sweep.seeds;
  s.t_max = sweep.t_max;
  s.record_wall_time = sweep.record_wall_time;
  return s;
}

SufficientStats RunSetup::ode_initial_state() const {
  const int p = problem.p, k = problem.k;
  Eigen::VectorXd a = problem.a.size() ? problem.a : Eigen::VectorXd::Ones(p);
  Eigen::VectorXd as = problem.a_star.size() ? problem.a_star : Eigen::VectorXd::Ones(k);
  SufficientStats s;
  if (ode.teacher_start) {
    if (p != k) throw Error(Errc::invalid_argument, "teacher start needs p = k");
    s = SufficientStats::teacher_configuration(Eigen::MatrixXd::Identity(k, k), as);
  } else {
    Eigen::MatrixXd M;
    switch (train.init.mode) {
      case InitMode::warm_matrix:
        M = train.init.M;
        break;
      case InitMode::warm:
        M = Eigen::MatrixXd::Constant(p, k, train.init.m0);
        break;
      case InitMode::cold:
      case InitMode::sign_fixed_cold:
        M = Eigen::MatrixXd::Constant(p, k, 1.0 / std::sqrt(static_cast<double>(train.regime.d)));
        break;
    }
    if (M.rows() != p || M.cols() != k) throw Error(Errc::invalid_argument, "init.M must be p x k");
    s = SufficientStats::warm_orthonormal(M);
  }
  s.a = a;
  s.a_star = as;
  return s;
}

namespace {

Eigen::MatrixXd parse_matrix(const Config& c, const std::string& key) {
  const std::string text = c.get_string(key, "");
  std::vector<std::vector<double>> rows;
  for (const auto& row : split(text, ';')) {
    std::vector<double> r;
    for (const auto& x : split(row, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(x.data(), x.data() + x.size(), v);
      if (x.empty() || res.ec != std::errc() || res.ptr != x.data() + x.size())
        throw Error(Errc::config, "key '" + key + "': expected rows 'a,b;c,d', got '" + text + "'");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty() || rows[0].empty()) throw Error(Errc::config, "key '" + key + "': empty matrix");
  Eigen::MatrixXd M(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw Error(Errc::config, "key '" + key + "': ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  }
  return M;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

// Library errors raised while interpreting values become config errors naming the key.
template <class F>
auto as_config(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::config) throw;
    throw Error(Errc::config, "key '" + key + "': " + e.detail());
  }
}

}  // namespace

RunSetup build_setup(const Config& c, std::uint64_t seed) {
  RunSetup s;
  ProblemSpec& pr = s.problem;
  pr.p = static_cast<int>(c.get_int("problem.p", 1));
  pr.k = static_cast<int>(c.get_int("problem.k", 1));
  pr.student = as_config("problem.student", [&] { return Activation::parse(c.get_string("problem.student", "he3")); });
  pr.teacher = as_config("problem.teacher", [&] { return Activation::parse(c.get_string("problem.teacher", pr.student.name())); });
  pr.noise = c.get_double("problem.noise", 0.0);
  if (c.has("problem.a")) pr.a = to_vector(c.get_doubles("problem.a", {}));
  if (c.has("problem.a_star")) pr.a_star = to_vector(c.get_doubles("problem.a_star", {}));
  if (pr.p < 1 || pr.k < 1) throw Error(Errc::config, "problem.p and problem.k must be positive");
  if (pr.noise < 0) throw Error(Errc::config, "key 'problem.noise': must be nonnegative");
  if (pr.a.size() && pr.a.size() != pr.p) throw Error(Errc::config, "key 'problem.a': needs p entries");
  if (pr.a_star.size() && pr.a_star.size() != pr.k) throw Error(Errc::config, "key 'problem.a_star': needs k entries");

  ScalingRegime& r = s.train.regime;
  r.gamma0 = c.get_double("regime.gamma0", 1.0);
  r.delta = c.get_double("regime.delta", 1.0);
  r.n0 = c.get_double("regime.n0", 1.0);
  r.mu = c.get_double("regime.mu", 0.0);
  r.d = c.get_int("regime.d", 1000);

  TrainConfig& t = s.train;
  t.loss = as_config("train.loss", [&] { return parse_loss(c.get_string("train.loss", "square")); });
  t.update = as_config("train.update", [&] { return parse_update_rule(c.get_string("train.update", "projected")); });
  if (c.get_bool("train.adaptive", false)) {
    AdaptiveSchedule a;
    a.switch_fraction = c.get_double("adaptive.switch_fraction", a.switch_fraction);
    a.lr_decay = c.get_double("adaptive.lr_decay", a.lr_decay);
    t.adaptive = a;
  } else {
    (void)c.raw("adaptive.switch_fraction");
    (void)c.raw("adaptive.lr_decay");
  }
  t.t_max = c.get_int("train.t_max", 1000);
  t.eta = c.get_double("train.eta", 0.5);
  t.record_stride = c.get_int("train.record_stride", 1);
  t.test_risk = as_config("train.test_risk", [&] { return parse_risk_mode(c.get_string("train.test_risk", "auto")); });
  t.n_test = c.get_int("train.n_test", 10000);
  t.sampler = as_config("train.sampler", [&] { return parse_sampler(c.get_string("train.sampler", "projected")); });
  t.stop_at_recovery = c.get_bool("train.stop_at_recovery", true);
  t.seed = seed;

  t.init.mode = as_config("init.mode", [&] { return parse_init_mode(c.get_string("init.mode", "cold")); });
  t.init.m0 = c.get_double("init.m0", 0.0);
  if (c.has("init.M")) t.init.M = parse_matrix(c, "init.M");
  if (t.init.mode == InitMode::warm_matrix && t.init.M.size() == 0)
    throw Error(Errc::config, "init.mode = warm_matrix needs init.M");
  as_config("train", [&] { t.validate(); return 0; });

  OdeSetup& o = s.ode;
  o.mode = as_config("ode.mode", [&] { return parse_ode_mode(c.get_string("ode.mode", "asymptotic")); });
  o.tau_max = c.get_double("ode.tau_max", o.tau_max);
  o.steps = c.get_int("ode.steps", o.steps);
  o.integrate.method = as_config("ode.integrator", [&] { return parse_integrator(c.get_string("ode.integrator", "rk4")); });
  o.integrate.step = c.get_double("ode.step", 0.0);
  o.integrate.record_every = c.get_double("ode.record_every", 0.0);
  o.integrate.eta = t.eta;
  o.record_stride = c.get_int("ode.record_stride", 1);
  o.mc_samples = c.get_int("ode.mc_samples", o.mc_samples);
  o.teacher_start = c.get_string("ode.start", "init") == "teacher";
  if (const auto st = c.raw("ode.start"); st && *st != "teacher" && *st != "init")
    throw Error(Errc::config, "key 'ode.start': expected init or teacher, got '" + *st + "'");
  if (!(o.tau_max > 0) || o.steps < 1 || o.record_stride < 1 || o.integrate.step < 0 || o.mc_samples < 1000)
    throw Error(Errc::config, "ode settings out of range (tau_max > 0, steps >= 1, record_stride >= 1, step >= 0, mc_samples >= 1000)");

  SweepSetup& w = s.sweep;
  for (double d : c.get_doubles("sweep.d", {static_cast<double>(r.d)})) {
    if (d != std::floor(d) || d < 1) throw Error(Errc::config, "key 'sweep.d': dimensions must be positive integers");
    w.ds.push_back(static_cast<std::int64_t>(d));
  }
  w.deltas = c.get_doubles("sweep.delta", {r.delta});
  w.mus = c.get_doubles("sweep.mu", {r.mu});
  w.seeds = static_cast<int>(c.get_int("sweep.seeds", 1));
  if (c.has("sweep.t_max")) w.t_max = c.get_int("sweep.t_max", 0);
  w.record_wall_time = c.get_bool("sweep.record_wall_time", false);
  w.fit_model = as_config("sweep.fit_model", [&] { return parse_fit_model(c.get_string("sweep.fit_model", "log-log")); });
  as_config("sweep", [&] { s.sweep_spec().validate(); return 0; });

  (void)c.raw("seed");  // resolved by the caller
  c.check_all_used();
  return s;
}

std::string config_reference() {
  return R"(problem.p = 1                 student width
problem.k = 1                 teacher width
problem.student = he3         he<k> | erf | tanh | mix(w0,w1,...) | table(x:y,...)
problem.teacher = <student>   as above, or tanh_of_product
problem.noise = 0             label-noise variance
problem.a, problem.a_star     comma lists (default all ones)
regime.gamma0 = 1             gamma = gamma0 d^-delta
regime.delta = 1
regime.n0 = 1                 n_b = round(n0 d^mu)
regime.mu = 0
regime.d = 1000
train.loss = square           square | correlation
train.update = projected      projected | spherical
train.adaptive = false        correlation loss, then square loss with decaying step
adaptive.switch_fraction = 0.6
adaptive.lr_decay = 0.995
train.t_max = 1000
train.eta = 0.5               weak-recovery threshold on |W W*^T|_F
train.record_stride = 1
train.test_risk = auto        auto | analytic | mc
train.n_test = 10000
train.sampler = projected     projected | explicit
train.stop_at_recovery = true
init.mode = cold              cold | warm | sign_fixed_cold | warm_matrix
init.m0 = 0                   warm
init.M = 0.3,0.1;0.1,0.3      warm_matrix rows
ode.mode = asymptotic         asymptotic | full_process
ode.start = init              init | teacher
ode.tau_max = 10
ode.steps = 1000              full_process
ode.integrator = rk4          rk4 | euler
ode.step = 0                  0: min(dtau, 1e-2) for rk4, dtau for euler
ode.record_every = 0
ode.record_stride = 1         full_process
ode.mc_samples = 100000       kernels without closed forms
sweep.d = <regime.d>          comma lists
sweep.delta = <regime.delta>
sweep.mu = <regime.mu>
sweep.seeds = 1
sweep.t_max = <rule>          default 50 x predicted steps, else 1e6/n_b
sweep.record_wall_time = false
sweep.fit_model = log-log     log-log | lin-log
seed = 1                      master seed (--seed and MINDEX_SEED take precedence as documented)
)";
}

}  // namespace mindex
