#include "mindex/ode.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "mindex/error.hpp"

namespace mindex {

double ScalingRegime::gamma() const { return gamma0 * std::pow(static_cast<double>(d), -delta); }

std::int64_t ScalingRegime::n_b() const {
  return std::llround(n0 * std::pow(static_cast<double>(d), mu));
}

double ScalingRegime::dtau() const {
  return std::pow(static_cast<double>(d), std::max(-delta, -2.0 * delta + 1.0 - mu));
}

bool ScalingRegime::defined() const { return delta >= 0.0 && 2.0 * delta + mu >= 1.0; }
bool ScalingRegime::flag_population() const { return defined() && delta + mu >= 1.0; }
bool ScalingRegime::flag_hd_noise() const { return defined() && delta + mu <= 1.0; }

void ScalingRegime::validate() const {
  if (!(gamma0 >= 0.0)) throw Error(Errc::invalid_argument, "gamma0 must be nonnegative");
  if (!(n0 > 0.0)) throw Error(Errc::invalid_argument, "n0 must be positive");
  if (!(mu >= 0.0)) throw Error(Errc::invalid_argument, "mu must be nonnegative");
  if (d < 1) throw Error(Errc::invalid_argument, "d must be positive");
  if (n_b() < 1) throw Error(Errc::invalid_argument, "n_b = round(n0 d^mu) must be at least 1");
}

namespace {

bool use_teacher_only(const OdeModel& m) { return m.loss == Loss::correlation; }

}  // namespace

Eigen::MatrixXd psi_matrix(const OdeModel& model, const SufficientStats& s) {
  const int p = s.p(), k = s.k();
  const KernelSet& K = model.kernels;
  const auto& Q = s.Q;
  const auto& M = s.M;
  const auto& P = s.P;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(p, k);
  for (int j = 0; j < p; ++j) {
    for (int r = 0; r < k; ++r) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t)
        acc += s.a_star(t) / k *
               K.i3(Role::teacher, {Q(j, j), M(j, r), M(j, t), P(r, r), P(r, t), P(t, t)}).estimate;
      if (!use_teacher_only(model))
        for (int u = 0; u < p; ++u)
          acc -= s.a(u) / p *
                 K.i3(Role::student, {Q(j, j), M(j, r), Q(j, u), P(r, r), M(u, r), Q(u, u)}).estimate;
      psi(j, r) = acc;
    }
  }
  return psi;
}

Eigen::MatrixXd phi_gf_matrix(const OdeModel& model, const SufficientStats& s) {
  const int p = s.p(), k = s.k();
  const KernelSet& K = model.kernels;
  const auto& Q = s.Q;
  const auto& M = s.M;
  const auto& P = s.P;
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    for (int l = 0; l < p; ++l) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t)
        acc += s.a_star(t) / k *
               K.i3(Role::teacher, {Q(j, j), Q(j, l), M(j, t), Q(l, l), M(l, t), P(t, t)}).estimate;
      if (!use_teacher_only(model))
        for (int u = 0; u < p; ++u)
          acc -= s.a(u) / p *
                 K.i3(Role::student, {Q(j, j), Q(j, l), Q(j, u), Q(l, l), Q(l, u), Q(u, u)}).estimate;
      phi(j, l) = acc;
    }
  }
  return phi;
}

Eigen::MatrixXd phi_hd_matrix(const OdeModel& model, const SufficientStats& s) {
  const int p = s.p(), k = s.k();
  const KernelSet& K = model.kernels;
  const auto& Q = s.Q;
  const auto& M = s.M;
  const auto& P = s.P;
  const bool corr = use_teacher_only(model);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    for (int l = j; l < p; ++l) {
      double acc = 0.0;
      for (int r = 0; r < k; ++r)
        for (int t = 0; t < k; ++t)
          acc += s.a_star(r) * s.a_star(t) / (double(k) * k) *
                 K.i4(Role::teacher, Role::teacher,
                      {Q(j, j), Q(j, l), M(j, r), M(j, t), Q(l, l), M(l, r), M(l, t), P(r, r),
                       P(r, t), P(t, t)})
                     .estimate;
      if (!corr) {
        for (int u = 0; u < p; ++u)
          for (int v = 0; v < p; ++v)
            acc += s.a(u) * s.a(v) / (double(p) * p) *
                   K.i4(Role::student, Role::student,
                        {Q(j, j), Q(j, l), Q(j, u), Q(j, v), Q(l, l), Q(l, u), Q(l, v), Q(u, u),
                         Q(u, v), Q(v, v)})
                       .estimate;
        for (int r = 0; r < k; ++r)
          for (int u = 0; u < p; ++u)
            acc -= 2.0 * s.a_star(r) * s.a(u) / (double(p) * k) *
                   K.i4(Role::student, Role::teacher,
                        {Q(j, j), Q(j, l), Q(j, u), M(j, r), Q(l, l), Q(l, u), M(l, r), Q(u, u),
                         M(u, r), P(r, r)})
                       .estimate;
      }
      acc += model.noise * K.i2_noise(Q(j, j), Q(j, l), Q(l, l)).estimate;
      phi(j, l) = acc;
      phi(l, j) = acc;
    }
  }
  return phi;
}

PhiBC phi_bc_matrix(const SufficientStats& s, const Eigen::MatrixXd& psi,
                    const Eigen::MatrixXd& phi_gf) {
  const Eigen::MatrixXd P_inv = s.P.inverse();
  const Eigen::MatrixXd psi_p = psi * P_inv;  // rows ψ_j P⁻¹
  Eigen::MatrixXd q_perp = s.Q - s.M * P_inv * s.M.transpose();
  q_perp = 0.5 * (q_perp + q_perp.transpose());
  const int p = s.p();
  PhiBC out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q_perp, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (cond > 1e12) {
    q_perp += 1e-10 * Eigen::MatrixXd::Identity(p, p);
    out.regularized = true;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(q_perp);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::singular_orthogonal_overlap,
                "Q - M P^-1 M^T is not positive definite (min eigenvalue " + std::to_string(lo) + ")");
  // Row j of R: E[σ'(λ_j) E λ^⊥] = φ^GF_j − M P⁻¹ ψ_jᵀ.
  const Eigen::MatrixXd R = phi_gf - psi_p * s.M.transpose();
  out.value = psi_p * psi.transpose() + R * llt.solve(R.transpose());
  out.value = 0.5 * (out.value + out.value.transpose());
  return out;
}

PhiBC phi_bc_matrix(const OdeModel& model, const SufficientStats& s) {
  return phi_bc_matrix(s, psi_matrix(model, s), phi_gf_matrix(model, s));
}

namespace {

OdeDerivative spherical_feedback(const SufficientStats& s, const Eigen::MatrixXd& Psi,
                                 const Eigen::MatrixXd& Phi) {
  const int p = s.p(), k = s.k();
  OdeDerivative d;
  d.dM.resize(p, k);
  d.dQ.resize(p, p);
  for (int j = 0; j < p; ++j)
    for (int r = 0; r < k; ++r) d.dM(j, r) = Psi(j, r) - 0.5 * s.M(j, r) * Phi(j, j);
  for (int j = 0; j < p; ++j)
    for (int l = 0; l < p; ++l) d.dQ(j, l) = Phi(j, l) - 0.5 * s.Q(j, l) * (Phi(j, j) + Phi(l, l));
  return d;
}

}  // namespace

OdeDerivative ode_rhs(const OdeModel& model, const SufficientStats& s, const ScalingRegime& regime) {
  const int p = s.p(), k = s.k();
  const bool pop = regime.flag_population(), hd = regime.flag_hd_noise();
  if (!pop && !hd) {
    OdeDerivative d{Eigen::MatrixXd::Zero(p, k), Eigen::MatrixXd::Zero(p, p), true};
    return d;
  }
  const double g0 = regime.gamma0;
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Zero(p, k);
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(p, p);
  if (pop) {
    const Eigen::MatrixXd psi = psi_matrix(model, s);
    const Eigen::MatrixXd gf = phi_gf_matrix(model, s);
    for (int j = 0; j < p; ++j) {
      Psi.row(j) = g0 / p * s.a(j) * psi.row(j);
      for (int l = 0; l < p; ++l) Phi(j, l) += g0 / p * (s.a(j) * gf(j, l) + s.a(l) * gf(l, j));
    }
  }
  if (hd) {
    const Eigen::MatrixXd hdm = phi_hd_matrix(model, s);
    const double c = g0 * g0 / (double(p) * p * regime.n0);
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l) Phi(j, l) += c * s.a(j) * s.a(l) * hdm(j, l);
  }
  return spherical_feedback(s, Psi, Phi);
}

FullProcessStep full_process_step(const OdeModel& model, const SufficientStats& s,
                                  const ScalingRegime& regime) {
  const int p = s.p();
  const double gamma = regime.gamma();
  const double nb = static_cast<double>(regime.n_b());
  const double d = static_cast<double>(regime.d);
  const Eigen::MatrixXd psi = psi_matrix(model, s);
  const Eigen::MatrixXd gf = phi_gf_matrix(model, s);
  const Eigen::MatrixXd hdm = phi_hd_matrix(model, s);
  const PhiBC bc = phi_bc_matrix(s, psi, gf);

  FullProcessStep out;
  out.regularized = bc.regularized;
  SufficientStats& n = out.next;
  n = s;
  Eigen::MatrixXd Qraw = s.Q;
  for (int j = 0; j < p; ++j) {
    n.M.row(j) = s.M.row(j) + gamma / p * s.a(j) * psi.row(j);
    for (int l = 0; l < p; ++l) {
      const double aa = s.a(j) * s.a(l) / (double(p) * p);
      Qraw(j, l) += gamma / p * (s.a(j) * gf(j, l) + s.a(l) * gf(l, j)) +
                    gamma * gamma * d / nb * aa * hdm(j, l) +
                    gamma * gamma * (1.0 - 1.0 / nb) * aa * bc.value(j, l);
    }
  }
  Eigen::VectorXd norm(p);
  for (int j = 0; j < p; ++j) {
    if (!(Qraw(j, j) > 1e-300))
      throw Error(Errc::zero_norm_update, "full process row " + std::to_string(j) + " collapsed");
    norm(j) = std::sqrt(Qraw(j, j));
  }
  for (int j = 0; j < p; ++j) {
    n.M.row(j) /= norm(j);
    for (int l = 0; l < p; ++l) n.Q(j, l) = Qraw(j, l) / (norm(j) * norm(l));
  }
  return out;
}

Integrator parse_integrator(const std::string& text) {
  if (text == "euler") return Integrator::euler;
  if (text == "rk4") return Integrator::rk4;
  throw Error(Errc::invalid_argument, "integrator must be euler or rk4, got '" + text + "'");
}

namespace {

SufficientStats advance(const SufficientStats& s, const OdeDerivative& d, double h) {
  SufficientStats n = s;
  n.M += h * d.dM;
  n.Q += h * d.dQ;
  return n;
}

void record(OdeTrajectory& tr, const OdeModel& model, const SufficientStats& s, double tau) {
  tr.tau.push_back(tau);
  tr.stats.push_back(s);
  const McEstimate r = population_risk(s, model.noise, model.kernels);
  tr.risk.push_back(r.estimate);
  tr.risk_stderr.push_back(r.stderr_);
}

void check_psd(OdeTrajectory& tr, const SufficientStats& s, double tau, double tol) {
  const double lo = s.min_eigenvalue();
  tr.min_eigenvalue = std::min(tr.min_eigenvalue, lo);
  if (lo < -tol)
    throw Error(Errc::psd_violation, "overlap matrix lost positive semidefiniteness at tau = " +
                                         std::to_string(tau) + " (min eigenvalue " +
                                         std::to_string(lo) + ")");
}

}  // namespace

OdeTrajectory integrate(const OdeModel& model, const SufficientStats& s0,
                        const ScalingRegime& regime, double tau_max,
                        const IntegrateOptions& opt) {
  if (!(tau_max > 0.0)) throw Error(Errc::invalid_argument, "tau_max must be positive");
  double h = opt.step;
  if (h == 0.0) h = opt.method == Integrator::euler ? regime.dtau() : std::min(regime.dtau(), 1e-2);
  if (!(h > 0.0)) throw Error(Errc::invalid_argument, "integration step must be positive");
  const auto n_steps = static_cast<std::int64_t>(std::floor(tau_max / h + 1e-9));
  const std::int64_t stride =
      opt.record_every > 0.0 ? std::max<std::int64_t>(1, std::llround(opt.record_every / h)) : 1;

  OdeTrajectory tr;
  tr.min_eigenvalue = s0.min_eigenvalue();
  SufficientStats s = s0;
  record(tr, model, s, 0.0);
  auto crossed = [&](const SufficientStats& st) { return opt.eta && st.M.norm() >= *opt.eta; };
  if (crossed(s)) {
    tr.tau_eta = 0.0;
    tr.step_eta = 0;
    if (opt.stop_at_eta) return tr;
  }
  if (!regime.flag_population() && !regime.flag_hd_noise()) tr.frozen = true;

  for (std::int64_t i = 1; i <= n_steps; ++i) {
    if (opt.method == Integrator::euler) {
      s = advance(s, ode_rhs(model, s, regime), h);
    } else {
      const OdeDerivative k1 = ode_rhs(model, s, regime);
      const OdeDerivative k2 = ode_rhs(model, advance(s, k1, h / 2), regime);
      const OdeDerivative k3 = ode_rhs(model, advance(s, k2, h / 2), regime);
      const OdeDerivative k4 = ode_rhs(model, advance(s, k3, h), regime);
      s.M += h / 6 * (k1.dM + 2 * k2.dM + 2 * k3.dM + k4.dM);
      s.Q += h / 6 * (k1.dQ + 2 * k2.dQ + 2 * k3.dQ + k4.dQ);
    }
    const double tau = i * h;
    check_psd(tr, s, tau, opt.psd_tol);
    const bool hit = !tr.tau_eta && crossed(s);
    if (hit) {
      tr.tau_eta = tau;
      tr.step_eta = i;
    }
    if (i % stride == 0 || i == n_steps || (hit && opt.stop_at_eta)) record(tr, model, s, tau);
    if (hit && opt.stop_at_eta) break;
  }
  return tr;
}

OdeTrajectory iterate_full_process(const OdeModel& model, const SufficientStats& s0,
                                   const ScalingRegime& regime, std::int64_t steps,
                                   std::int64_t record_stride, std::optional<double> eta,
                                   bool stop_at_eta, double psd_tol) {
  if (steps < 0 || record_stride < 1)
    throw Error(Errc::invalid_argument, "steps must be nonnegative and stride positive");
  const double dtau = regime.dtau();
  OdeTrajectory tr;
  tr.min_eigenvalue = s0.min_eigenvalue();
  SufficientStats s = s0;
  record(tr, model, s, 0.0);
  auto crossed = [&](const SufficientStats& st) { return eta && st.M.norm() >= *eta; };
  if (crossed(s)) {
    tr.tau_eta = 0.0;
    tr.step_eta = 0;
    if (stop_at_eta) return tr;
  }
  for (std::int64_t t = 1; t <= steps; ++t) {
    FullProcessStep st = full_process_step(model, s, regime);
    tr.regularized = tr.regularized || st.regularized;
    s = std::move(st.next);
    check_psd(tr, s, t * dtau, psd_tol);
    const bool hit = !tr.step_eta && crossed(s);
    if (hit) {
      tr.step_eta = t;
      tr.tau_eta = t * dtau;
    }
    if (t % record_stride == 0 || t == steps || (hit && stop_at_eta)) record(tr, model, s, t * dtau);
    if (hit && stop_at_eta) break;
  }
  return tr;
}

}  // namespace mindex
