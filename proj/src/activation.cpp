#include "mindex/activation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "mindex/error.hpp"

namespace mindex {

namespace {

double interp_table(const std::vector<double>& xs, const std::vector<double>& ys, double x,
                    double* slope) {
  const std::size_t n = xs.size();
  std::size_t i;
  if (x <= xs.front()) {
    i = 0;
  } else if (x >= xs.back()) {
    i = n - 2;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    if (i > n - 2) i = n - 2;
  }
  const double s = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
  if (slope) *slope = s;
  return ys[i] + s * (x - xs[i]);
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw Error(Errc::invalid_argument, "bad number '" + s + "' in " + context);
  return v;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

// Orthonormal recurrence value of he_n and he_{n-1} at x.
std::pair<double, double> orthonormal_hermite_pair(int n, double x) {
  double prev = 0.0, cur = 1.0;
  for (int k = 0; k < n; ++k) {
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
    prev = cur;
    cur = next;
  }
  return {cur, prev};
}

QuadratureRule golub_welsch(int n, bool hermite) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) {
    sub(k - 1) = hermite ? std::sqrt(static_cast<double>(k))
                         : k / std::sqrt(4.0 * k * k - 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    if (hermite) {
      // Eigenvector weights carry absolute, not relative, error in the tails where polynomial
      // integrands are huge; polish the node by Newton and use w = 1 / (n he_{n-1}(x)^2).
      for (int it = 0; it < 3; ++it) {
        const auto [hn, hn1] = orthonormal_hermite_pair(n, x);
        x -= hn / (std::sqrt(static_cast<double>(n)) * hn1);
      }
      const double hn1 = orthonormal_hermite_pair(n, x).second;
      rule.nodes[i] = x;
      rule.weights[i] = 1.0 / (n * hn1 * hn1);
    } else {
      const double v0 = es.eigenvectors()(0, i);
      rule.nodes[i] = x;
      rule.weights[i] = 2.0 * v0 * v0;
    }
  }
  return rule;
}

const QuadratureRule& cached_rule(int n, bool hermite) {
  static std::mutex mu;
  static std::map<std::pair<int, bool>, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({n, hermite});
  if (it == cache.end()) it = cache.emplace(std::make_pair(n, hermite), golub_welsch(n, hermite)).first;
  return it->second;
}

}  // namespace

namespace detail {
const QuadratureRule& gauss_legendre_rule(int n) { return cached_rule(n, false); }
}  // namespace detail

const QuadratureRule& gauss_hermite_rule(int n) {
  if (n < 2) throw Error(Errc::invalid_argument, "quadrature needs at least 2 nodes");
  return cached_rule(n, true);
}

Activation Activation::hermite(int degree) {
  if (degree < 0 || degree > 20)
    throw Error(Errc::invalid_argument, "hermite degree must be in [0, 20]");
  Activation a;
  a.kind_ = ActivationKind::hermite;
  a.degree_ = degree;
  return a;
}

Activation Activation::hermite_mixture(std::vector<double> weights) {
  if (weights.empty() || weights.size() > 21)
    throw Error(Errc::invalid_argument, "mixture needs 1..21 weights");
  Activation a;
  a.kind_ = ActivationKind::hermite_mixture;
  a.weights_ = std::move(weights);
  a.degree_ = static_cast<int>(a.weights_.size()) - 1;
  return a;
}

Activation Activation::erf_scaled() {
  Activation a;
  a.kind_ = ActivationKind::erf_scaled;
  return a;
}

Activation Activation::tanh() {
  Activation a;
  a.kind_ = ActivationKind::tanh;
  return a;
}

Activation Activation::tanh_of_product() {
  Activation a;
  a.kind_ = ActivationKind::tanh_of_product;
  return a;
}

Activation Activation::tabulated(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() < 2 || xs.size() != ys.size())
    throw Error(Errc::invalid_argument, "table needs at least two points of equal length");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1]))
      throw Error(Errc::invalid_argument, "table abscissae must be strictly increasing");
  Activation a;
  a.kind_ = ActivationKind::tabulated;
  a.xs_ = std::move(xs);
  a.ys_ = std::move(ys);
  return a;
}

Activation Activation::parse(const std::string& raw) {
  const std::string text = trim(raw);
  if (text == "erf" || text == "erf_scaled") return erf_scaled();
  if (text == "tanh") return tanh();
  if (text == "tanh_of_product") return tanh_of_product();
  if (text.size() > 2 && text.rfind("he", 0) == 0) {
    int deg = 0;
    const auto* first = text.data() + 2;
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, deg);
    if (ec == std::errc() && ptr == last) return hermite(deg);
  }
  auto body = [&](const std::string& prefix) -> std::string {
    if (text.rfind(prefix + "(", 0) != 0 || text.back() != ')')
      throw Error(Errc::invalid_argument, "unknown activation '" + text + "'");
    return text.substr(prefix.size() + 1, text.size() - prefix.size() - 2);
  };
  if (text.rfind("mix(", 0) == 0) {
    std::vector<double> w;
    std::stringstream ss(body("mix"));
    std::string item;
    while (std::getline(ss, item, ',')) w.push_back(parse_double(trim(item), text));
    return hermite_mixture(std::move(w));
  }
  if (text.rfind("table(", 0) == 0) {
    std::vector<double> xs, ys;
    std::stringstream ss(body("table"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw Error(Errc::invalid_argument, "table entries are x:y in '" + text + "'");
      xs.push_back(parse_double(trim(item.substr(0, colon)), text));
      ys.push_back(parse_double(trim(item.substr(colon + 1)), text));
    }
    return tabulated(std::move(xs), std::move(ys));
  }
  throw Error(Errc::invalid_argument, "unknown activation '" + text + "'");
}

bool Activation::analytic_kernels() const {
  return (kind_ == ActivationKind::hermite && (degree_ == 2 || degree_ == 3)) ||
         kind_ == ActivationKind::erf_scaled;
}

double Activation::value(double x) const {
  switch (kind_) {
    case ActivationKind::hermite:
      return hermite_poly(degree_, x);
    case ActivationKind::hermite_mixture: {
      double acc = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k)
        if (weights_[k] != 0.0) acc += weights_[k] * hermite_poly(static_cast<int>(k), x);
      return acc;
    }
    case ActivationKind::erf_scaled:
      return std::erf(x / std::numbers::sqrt2);
    case ActivationKind::tanh:
    case ActivationKind::tanh_of_product:
      return std::tanh(x);
    case ActivationKind::tabulated:
      return interp_table(xs_, ys_, x, nullptr);
  }
  return 0.0;
}

double Activation::derivative(double x) const {
  switch (kind_) {
    case ActivationKind::hermite:
      return hermite_poly_derivative(degree_, x);
    case ActivationKind::hermite_mixture: {
      double acc = 0.0;
      for (std::size_t k = 1; k < weights_.size(); ++k)
        if (weights_[k] != 0.0) acc += weights_[k] * hermite_poly_derivative(static_cast<int>(k), x);
      return acc;
    }
    case ActivationKind::erf_scaled:
      return std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * x * x);
    case ActivationKind::tanh:
    case ActivationKind::tanh_of_product: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::tabulated: {
      double s = 0.0;
      interp_table(xs_, ys_, x, &s);
      return s;
    }
  }
  return 0.0;
}

double Activation::target(std::span<const double> fields) const {
  if (kind_ == ActivationKind::tanh_of_product) {
    double prod = 1.0;
    for (double f : fields) prod *= f;
    return std::tanh(prod);
  }
  return value(fields[0]);
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::hermite:
      return "he" + std::to_string(degree_);
    case ActivationKind::hermite_mixture: {
      std::string s = "mix(";
      for (std::size_t k = 0; k < weights_.size(); ++k)
        s += (k ? "," : "") + format_number(weights_[k]);
      return s + ")";
    }
    case ActivationKind::erf_scaled:
      return "erf";
    case ActivationKind::tanh:
      return "tanh";
    case ActivationKind::tanh_of_product:
      return "tanh_of_product";
    case ActivationKind::tabulated: {
      std::string s = "table(";
      for (std::size_t i = 0; i < xs_.size(); ++i)
        s += (i ? "," : "") + format_number(xs_[i]) + ":" + format_number(ys_[i]);
      return s + ")";
    }
  }
  return "?";
}

double hermite_poly(int k, double x) {
  if (k < 0 || k > 20) throw Error(Errc::invalid_argument, "hermite_poly needs 0 <= k <= 20");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int j = 1; j < k; ++j) {
    const double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double hermite_poly_derivative(int k, double x) {
  return k == 0 ? 0.0 : k * hermite_poly(k - 1, x);
}

double HermiteProfile::raw(int k) const {
  return std::sqrt(std::tgamma(k + 1.0)) * coeffs.at(static_cast<std::size_t>(k));
}

namespace {

std::vector<double> project_onto_hermite(const Activation& act, int max_degree, bool refine) {
  std::vector<double> c(static_cast<std::size_t>(max_degree) + 1);
  for (int k = 0; k <= max_degree; ++k) {
    const double norm = 1.0 / std::sqrt(std::tgamma(k + 1.0));
    c[static_cast<std::size_t>(k)] = gaussian_expectation(
        act, [&](double x) { return act.value(x) * hermite_poly(k, x) * norm; }, refine);
  }
  return c;
}

}  // namespace

HermiteProfile hermite_coefficients(const Activation& act, int max_degree, double zero_tol) {
  if (max_degree < 0 || max_degree > 20)
    throw Error(Errc::invalid_argument, "max_degree must be in [0, 20]");
  HermiteProfile prof;
  prof.max_degree = max_degree;
  prof.zero_tol = zero_tol;
  prof.coeffs = project_onto_hermite(act, max_degree, false);
  const std::vector<double> fine = project_onto_hermite(act, max_degree, true);
  double scale = 0.0;
  for (double c : prof.coeffs) scale = std::max(scale, std::abs(c));
  for (std::size_t k = 0; k < fine.size(); ++k) {
    if (std::abs(fine[k] - prof.coeffs[k]) > zero_tol * scale) {
      throw Error(Errc::quadrature_nonconvergence,
                  act.name() + " coefficient " + std::to_string(k) + " moved by " +
                      std::to_string(std::abs(fine[k] - prof.coeffs[k])) + " under node doubling");
    }
  }
  // Exact zeros below tolerance so one-hot profiles stay one-hot.
  for (double& c : prof.coeffs)
    if (std::abs(c) <= zero_tol * scale) c = 0.0;
  prof.c_sq = gaussian_expectation(act, [&](double x) { return x * act.value(x) * act.derivative(x); });
  return prof;
}

int information_exponent(const HermiteProfile& profile) {
  double scale = 0.0;
  for (double c : profile.coeffs) scale = std::max(scale, std::abs(c));
  for (std::size_t k = 1; k < profile.coeffs.size(); ++k)
    if (std::abs(profile.coeffs[k]) > profile.zero_tol * scale && scale > 0.0)
      return static_cast<int>(k);
  throw Error(Errc::no_nonzero_coefficient, "all coefficients with k >= 1 vanish");
}

double drift_phi(const HermiteProfile& student, const HermiteProfile& teacher, double m) {
  const std::size_t n = std::min(student.coeffs.size(), teacher.coeffs.size());
  double acc = 0.0, mk = 1.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    acc += static_cast<double>(k + 1) * student.coeffs[k + 1] * teacher.coeffs[k + 1] * mk;
    mk *= m;
  }
  return acc;
}

double drift_psi(const HermiteProfile& student, const HermiteProfile& teacher, double m,
                 Loss loss) {
  const std::size_t n = std::min(student.coeffs.size(), teacher.coeffs.size());
  double acc = 0.0, mk = 1.0;
  for (std::size_t k = 0; k + 2 < n; ++k) {
    acc += std::sqrt(static_cast<double>((k + 1) * (k + 2))) * student.coeffs[k + 2] *
           teacher.coeffs[k] * mk;
    mk *= m;
  }
  return loss == Loss::square ? acc - student.c_sq : acc;
}

const char* loss_name(Loss loss) { return loss == Loss::square ? "square" : "correlation"; }

Loss parse_loss(const std::string& text) {
  if (text == "square") return Loss::square;
  if (text == "correlation") return Loss::correlation;
  throw Error(Errc::invalid_argument, "loss must be square or correlation, got '" + text + "'");
}

}  // namespace mindex
