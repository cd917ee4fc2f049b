#include "mindex/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "mindex/error.hpp"
#include "mindex/rng.hpp"

namespace mindex {

namespace {

[[noreturn]] void unsupported(const Activation& act, const char* what) {
  throw Error(Errc::unsupported_activation,
              std::string(what) + " has no closed form for " + act.name() + "; use mc_kernel");
}

constexpr double kTwoOverPi = 2.0 / std::numbers::pi;

// He3 four-point kernel, expanded term by term (86 monomials).
double he3_i4(const Cov4& w) {
  const double aa = w.aa, ab = w.ab, ac = w.ac, ad = w.ad, bb = w.bb, bc = w.bc, bd = w.bd,
               cc = w.cc, cd = w.cd, dd = w.dd;
  return 0.0
      + 81.0 * aa*bb*cc*cd*dd
      - 81.0 * aa*bb*cc*cd
      + 54.0 * aa*bb*cd*cd*cd
      - 81.0 * aa*bb*cd*dd
      + 81.0 * aa*bb*cd
      + 162.0 * aa*cd*dd*bc*bc
      - 162.0 * aa*cd*bc*bc
      + 162.0 * aa*bc*bd*cc*dd
      - 162.0 * aa*bc*bd*cc
      + 324.0 * aa*bc*bd*cd*cd
      - 162.0 * aa*bc*bd*dd
      + 162.0 * aa*bc*bd
      + 162.0 * aa*cc*cd*bd*bd
      - 162.0 * aa*cd*bd*bd
      - 81.0 * aa*cc*cd*dd
      + 81.0 * aa*cc*cd
      - 54.0 * aa*cd*cd*cd
      + 81.0 * aa*cd*dd
      - 81.0 * aa*cd
      + 162.0 * cc*cd*dd*ab*ab
      - 162.0 * cc*cd*ab*ab
      + 108.0 * ab*ab*cd*cd*cd
      - 162.0 * cd*dd*ab*ab
      + 162.0 * cd*ab*ab
      + 648.0 * ab*ac*bc*cd*dd
      - 648.0 * ab*ac*bc*cd
      + 324.0 * ab*ac*bd*cc*dd
      - 324.0 * ab*ac*bd*cc
      + 648.0 * ab*ac*bd*cd*cd
      - 324.0 * ab*ac*bd*dd
      + 324.0 * ab*ac*bd
      + 324.0 * ab*ad*bc*cc*dd
      - 324.0 * ab*ad*bc*cc
      + 648.0 * ab*ad*bc*cd*cd
      - 324.0 * ab*ad*bc*dd
      + 324.0 * ab*ad*bc
      + 648.0 * ab*ad*bd*cc*cd
      - 648.0 * ab*ad*bd*cd
      + 162.0 * bb*cd*dd*ac*ac
      - 162.0 * bb*cd*ac*ac
      + 324.0 * bc*bd*dd*ac*ac
      - 324.0 * bc*bd*ac*ac
      + 324.0 * cd*ac*ac*bd*bd
      - 162.0 * cd*dd*ac*ac
      + 162.0 * cd*ac*ac
      + 162.0 * ac*ad*bb*cc*dd
      - 162.0 * ac*ad*bb*cc
      + 324.0 * ac*ad*bb*cd*cd
      - 162.0 * ac*ad*bb*dd
      + 162.0 * ac*ad*bb
      + 324.0 * ac*ad*dd*bc*bc
      - 324.0 * ac*ad*bc*bc
      + 1296.0 * ac*ad*bc*bd*cd
      + 324.0 * ac*ad*cc*bd*bd
      - 324.0 * ac*ad*bd*bd
      - 162.0 * ac*ad*cc*dd
      + 162.0 * ac*ad*cc
      - 324.0 * ac*ad*cd*cd
      + 162.0 * ac*ad*dd
      - 162.0 * ac*ad
      + 162.0 * bb*cc*cd*ad*ad
      - 162.0 * bb*cd*ad*ad
      + 324.0 * cd*ad*ad*bc*bc
      + 324.0 * bc*bd*cc*ad*ad
      - 324.0 * bc*bd*ad*ad
      - 162.0 * cc*cd*ad*ad
      + 162.0 * cd*ad*ad
      - 81.0 * bb*cc*cd*dd
      + 81.0 * bb*cc*cd
      - 54.0 * bb*cd*cd*cd
      + 81.0 * bb*cd*dd
      - 81.0 * bb*cd
      - 162.0 * cd*dd*bc*bc
      + 162.0 * cd*bc*bc
      - 162.0 * bc*bd*cc*dd
      + 162.0 * bc*bd*cc
      - 324.0 * bc*bd*cd*cd
      + 162.0 * bc*bd*dd
      - 162.0 * bc*bd
      - 162.0 * cc*cd*bd*bd
      + 162.0 * cd*bd*bd
      + 81.0 * cc*cd*dd
      - 81.0 * cc*cd
      + 54.0 * cd*cd*cd
      - 81.0 * cd*dd
      + 81.0 * cd      ;
}

double he2_i4(const Cov4& w) {
  return 4 * w.ab * w.cc * w.dd + 8 * w.ab * w.cd * w.cd + 8 * w.ac * w.bc * w.dd +
         16 * w.ac * w.bd * w.cd + 16 * w.ad * w.bc * w.cd + 8 * w.ad * w.bd * w.cc -
         4 * w.ab * w.cc - 8 * w.ac * w.bc - 4 * w.ab * w.dd - 8 * w.ad * w.bd + 4 * w.ab;
}

double erf_i4(const Cov4& w) {
  const double l4 = (1 + w.aa) * (1 + w.bb) - w.ab * w.ab;
  const double l0 = l4 * w.cd - w.bc * w.bd * (1 + w.aa) - w.ac * w.ad * (1 + w.bb) +
                    w.ab * w.ac * w.bd + w.ab * w.ad * w.bc;
  const double l1 = l4 * (1 + w.cc) - w.bc * w.bc * (1 + w.aa) - w.ac * w.ac * (1 + w.bb) +
                    2 * w.ab * w.ac * w.bc;
  const double l2 = l4 * (1 + w.dd) - w.bd * w.bd * (1 + w.aa) - w.ad * w.ad * (1 + w.bb) +
                    2 * w.ab * w.ad * w.bd;
  const double arg = std::clamp(l0 / std::sqrt(l1 * l2), -1.0, 1.0);
  return 4.0 / (std::numbers::pi * std::numbers::pi) / std::sqrt(l4) * std::asin(arg);
}

}  // namespace

double i2(const Activation& act, double aa, double ab, double bb) {
  if (act.kind() == ActivationKind::erf_scaled)
    return kTwoOverPi * std::asin(std::clamp(ab / std::sqrt((1 + aa) * (1 + bb)), -1.0, 1.0));
  if (act.kind() == ActivationKind::hermite && act.degree() == 2)
    return aa * bb + 2 * ab * ab - aa - bb + 1;
  if (act.kind() == ActivationKind::hermite && act.degree() == 3)
    return 9 * ab - 9 * aa * ab + 6 * ab * ab * ab - 9 * ab * bb + 9 * aa * ab * bb;
  unsupported(act, "i2");
}

double i3(const Activation& act, const Cov3& w) {
  if (act.kind() == ActivationKind::erf_scaled) {
    const double l3 = (1 + w.aa) * (1 + w.cc) - w.ac * w.ac;
    return kTwoOverPi / std::sqrt(l3) * (w.bc * (1 + w.aa) - w.ab * w.ac) / (1 + w.aa);
  }
  if (act.kind() == ActivationKind::hermite && act.degree() == 2)
    return 2 * w.ab * w.cc + 4 * w.ac * w.bc - 2 * w.ab;
  if (act.kind() == ActivationKind::hermite && act.degree() == 3)
    return -18 * w.ab * w.ac + 9 * w.bc - 9 * w.aa * w.bc + 18 * w.ac * w.ac * w.bc +
           18 * w.ab * w.ac * w.cc - 9 * w.bc * w.cc + 9 * w.aa * w.bc * w.cc;
  unsupported(act, "i3");
}

double i4(const Activation& act, const Cov4& w) {
  if (act.kind() == ActivationKind::erf_scaled) return erf_i4(w);
  if (act.kind() == ActivationKind::hermite && act.degree() == 2) return he2_i4(w);
  if (act.kind() == ActivationKind::hermite && act.degree() == 3) return he3_i4(w);
  unsupported(act, "i4");
}

double i2_noise(const Activation& act, double aa, double ab, double bb) {
  if (act.kind() == ActivationKind::erf_scaled)
    return kTwoOverPi / std::sqrt((1 + aa) * (1 + bb) - ab * ab);
  if (act.kind() == ActivationKind::hermite && act.degree() == 2) return 4 * ab;
  if (act.kind() == ActivationKind::hermite && act.degree() == 3)
    return 9 - 9 * aa + 18 * ab * ab - 9 * bb + 9 * aa * bb;
  unsupported(act, "i2_noise");
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw Error(Errc::invalid_argument, "covariance must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw Error(Errc::non_psd_covariance,
                "minimum eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

namespace {

template <class F>
McEstimate mc_loop(const Eigen::MatrixXd& cov, std::int64_t n, std::uint64_t seed, F&& f) {
  const Eigen::MatrixXd L = psd_factor(cov);
  const int dim = static_cast<int>(cov.rows());
  Stream rng(seed, 0x6d63);
  std::array<double, 16> xi{};
  std::array<double, 16> lam{};
  if (dim > 16) throw Error(Errc::invalid_argument, "mc_kernel supports at most 16 fields");
  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t s = 0; s < n; ++s) {
    for (int i = 0; i < dim; ++i) xi[i] = rng.normal();
    for (int i = 0; i < dim; ++i) {
      double v = 0.0;
      for (int j = 0; j < dim; ++j) v += L(i, j) * xi[j];
      lam[i] = v;
    }
    const double val = f(std::span<const double>(lam.data(), dim));
    sum += val;
    sum2 += val * val;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {mean, std::sqrt(var / (n - 1))};
}

void require_dim(const Eigen::MatrixXd& cov, int dim, const char* kind) {
  if (cov.rows() != dim)
    throw Error(Errc::invalid_argument,
                std::string(kind) + " needs a " + std::to_string(dim) + "x" + std::to_string(dim) + " covariance");
}

Eigen::MatrixXd cov_matrix(const Cov3& w) {
  Eigen::Matrix3d c;
  c << w.aa, w.ab, w.ac, w.ab, w.bb, w.bc, w.ac, w.bc, w.cc;
  return c;
}

Eigen::MatrixXd cov_matrix(const Cov4& w) {
  Eigen::Matrix4d c;
  c << w.aa, w.ab, w.ac, w.ad, w.ab, w.bb, w.bc, w.bd, w.ac, w.bc, w.cc, w.cd, w.ad, w.bd, w.cd, w.dd;
  return c;
}

Eigen::MatrixXd cov_matrix(double aa, double ab, double bb) {
  Eigen::Matrix2d c;
  c << aa, ab, ab, bb;
  return c;
}

}  // namespace

McEstimate mc_kernel(KernelKind kind, const ActivationPair& acts, const Eigen::MatrixXd& cov,
                     std::int64_t n_samples, std::uint64_t seed, const CustomIntegrand& custom) {
  if (n_samples < 1000) throw Error(Errc::invalid_argument, "mc_kernel needs at least 10^3 samples");
  const Activation& f = acts.first;
  const Activation& g = acts.second;
  switch (kind) {
    case KernelKind::i2:
      require_dim(cov, 2, "i2");
      return mc_loop(cov, n_samples, seed,
                     [&](std::span<const double> x) { return f.value(x[0]) * g.value(x[1]); });
    case KernelKind::i3:
      require_dim(cov, 3, "i3");
      return mc_loop(cov, n_samples, seed, [&](std::span<const double> x) {
        return f.derivative(x[0]) * x[1] * g.value(x[2]);
      });
    case KernelKind::i4:
      require_dim(cov, 4, "i4");
      return mc_loop(cov, n_samples, seed, [&](std::span<const double> x) {
        return f.derivative(x[0]) * f.derivative(x[1]) * g.value(x[2]) * g.value(x[3]);
      });
    case KernelKind::i2noise:
      require_dim(cov, 2, "i2noise");
      return mc_loop(cov, n_samples, seed, [&](std::span<const double> x) {
        return f.derivative(x[0]) * f.derivative(x[1]);
      });
    case KernelKind::custom:
      if (!custom) throw Error(Errc::invalid_argument, "custom kernel needs an integrand");
      return mc_loop(cov, n_samples, seed, custom);
  }
  return {};
}

KernelSet::KernelSet(Activation student, Activation teacher, std::int64_t mc_samples,
                     std::uint64_t mc_seed)
    : student_(std::move(student)),
      teacher_(std::move(teacher)),
      analytic_(student_ == teacher_ && student_.analytic_kernels()),
      mc_samples_(mc_samples),
      mc_seed_(mc_seed) {
  if (student_.is_multi_index() || teacher_.is_multi_index())
    throw Error(Errc::unsupported_activation,
                "overlap kernels need a committee teacher; tanh_of_product is simulation-only");
}

McEstimate KernelSet::i2(Role ra, Role rb, double aa, double ab, double bb) const {
  if (analytic_) return {mindex::i2(student_, aa, ab, bb), 0.0};
  const Activation& fa = pick(ra);
  const Activation& fb = pick(rb);
  return mc_loop(cov_matrix(aa, ab, bb), mc_samples_, mc_seed_,
                 [&](std::span<const double> x) { return fa.value(x[0]) * fb.value(x[1]); });
}

McEstimate KernelSet::i3(Role gamma, const Cov3& w) const {
  if (analytic_) return {mindex::i3(student_, w), 0.0};
  const Activation& fg = pick(gamma);
  return mc_loop(cov_matrix(w), mc_samples_, mc_seed_, [&](std::span<const double> x) {
    return student_.derivative(x[0]) * x[1] * fg.value(x[2]);
  });
}

McEstimate KernelSet::i4(Role gamma, Role delta, const Cov4& w) const {
  if (analytic_) return {mindex::i4(student_, w), 0.0};
  const Activation& fg = pick(gamma);
  const Activation& fd = pick(delta);
  return mc_loop(cov_matrix(w), mc_samples_, mc_seed_, [&](std::span<const double> x) {
    return student_.derivative(x[0]) * student_.derivative(x[1]) * fg.value(x[2]) * fd.value(x[3]);
  });
}

McEstimate KernelSet::i2_noise(double aa, double ab, double bb) const {
  if (analytic_) return {mindex::i2_noise(student_, aa, ab, bb), 0.0};
  return mc_loop(cov_matrix(aa, ab, bb), mc_samples_, mc_seed_, [&](std::span<const double> x) {
    return student_.derivative(x[0]) * student_.derivative(x[1]);
  });
}

McEstimate population_risk(const SufficientStats& s, double noise, const KernelSet& kernels) {
  const int p = s.p(), k = s.k();
  double acc = 0.0, var = 0.0;
  auto add = [&](double coef, const McEstimate& e) {
    acc += coef * e.estimate;
    var += coef * coef * e.stderr_ * e.stderr_;
  };
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      add(s.a(a) * s.a(b) / (double(p) * p),
          kernels.i2(Role::student, Role::student, s.Q(a, a), s.Q(a, b), s.Q(b, b)));
  for (int r = 0; r < k; ++r)
    for (int t = 0; t < k; ++t)
      add(s.a_star(r) * s.a_star(t) / (double(k) * k),
          kernels.i2(Role::teacher, Role::teacher, s.P(r, r), s.P(r, t), s.P(t, t)));
  for (int a = 0; a < p; ++a)
    for (int r = 0; r < k; ++r)
      add(-2.0 * s.a(a) * s.a_star(r) / (double(p) * k),
          kernels.i2(Role::student, Role::teacher, s.Q(a, a), s.M(a, r), s.P(r, r)));
  return {0.5 * noise + 0.5 * acc, 0.5 * std::sqrt(var)};
}

}  // namespace mindex
