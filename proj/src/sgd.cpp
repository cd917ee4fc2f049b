#include "mindex/sgd.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>

#include "mindex/error.hpp"
#include "mindex/kernels.hpp"

namespace mindex {

namespace {

thread_local std::int64_t g_predict_calls = 0;

void fill_normal(Eigen::MatrixXd& m, Stream& rng) {
  rng.fill_normal(std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
}

Eigen::RowVectorXd random_unit(std::int64_t d, Stream& rng) {
  Eigen::RowVectorXd v(d);
  rng.fill_normal(std::span<double>(v.data(), static_cast<std::size_t>(d)));
  return v / v.norm();
}

// Gram-Schmidt (twice) of v against the rows of `basis`; returns unit vector.
Eigen::RowVectorXd orthogonalize(Eigen::RowVectorXd v, const Eigen::MatrixXd& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 0; i < basis.rows(); ++i) v -= v.dot(basis.row(i)) * basis.row(i);
  const double n = v.norm();
  if (!(n > 1e-12)) throw Error(Errc::invalid_argument, "cannot orthogonalize: d too small");
  return v / n;
}

// σ' applied to fields → coefficient matrix C_νj = E^ν σ'(Λ_νj).
Eigen::MatrixXd gradient_coefficients(const StudentModel& s, const Eigen::MatrixXd& fields,
                                      const Eigen::VectorXd& y, Loss loss) {
  const Eigen::Index n = fields.rows();
  const int p = s.p();
  Eigen::VectorXd err = y;
  if (loss == Loss::square) {
    ++g_predict_calls;
    for (Eigen::Index v = 0; v < n; ++v) {
      double f = 0.0;
      for (int j = 0; j < p; ++j) f += s.a(j) * s.act.value(fields(v, j));
      err(v) -= f / p;
    }
  }
  Eigen::MatrixXd C(n, p);
  for (int j = 0; j < p; ++j)
    for (Eigen::Index v = 0; v < n; ++v) C(v, j) = err(v) * s.act.derivative(fields(v, j));
  return C;
}

void scale_rows(Eigen::MatrixXd& G, const Eigen::VectorXd& a, double c) {
  for (Eigen::Index j = 0; j < G.rows(); ++j) G.row(j) *= c * a(j);
}

}  // namespace

Eigen::VectorXd TeacherModel::labels(const Eigen::MatrixXd& fields) const {
  const Eigen::Index n = fields.rows();
  const int kk = k();
  Eigen::VectorXd y(n);
  if (target.is_multi_index()) {
    std::vector<double> row(static_cast<std::size_t>(kk));
    for (Eigen::Index v = 0; v < n; ++v) {
      for (int r = 0; r < kk; ++r) row[static_cast<std::size_t>(r)] = fields(v, r);
      y(v) = target.target(row);
    }
    return y;
  }
  for (Eigen::Index v = 0; v < n; ++v) {
    double acc = 0.0;
    for (int r = 0; r < kk; ++r) acc += a_star(r) * target.value(fields(v, r));
    y(v) = acc / kk;
  }
  return y;
}

TeacherModel TeacherModel::orthonormal(int k, std::int64_t d, Activation target, double noise,
                                       Stream& rng) {
  if (k < 1 || d < k) throw Error(Errc::invalid_argument, "teacher needs 1 <= k <= d");
  if (noise < 0.0) throw Error(Errc::invalid_argument, "noise variance must be nonnegative");
  TeacherModel t;
  t.w_star.resize(k, d);
  for (int r = 0; r < k; ++r) t.w_star.row(r) = orthogonalize(random_unit(d, rng), t.w_star.topRows(r));
  t.target = std::move(target);
  t.a_star = Eigen::VectorXd::Ones(k);
  t.noise = noise;
  return t;
}

Batch sample_batch(const TeacherModel& teacher, std::int64_t n_b, Stream& data, Stream& noise) {
  if (n_b < 1) throw Error(Errc::invalid_argument, "n_b must be at least 1");
  Batch b;
  b.Z.resize(n_b, teacher.d());
  fill_normal(b.Z, data);
  b.y = teacher.labels(b.Z * teacher.w_star.transpose());
  if (teacher.noise > 0.0) {
    const double s = std::sqrt(teacher.noise);
    for (Eigen::Index v = 0; v < n_b; ++v) b.y(v) += s * noise.normal();
  }
  return b;
}

Eigen::VectorXd predict(const StudentModel& s, const Eigen::MatrixXd& Z) {
  ++g_predict_calls;
  const Eigen::MatrixXd fields = Z * s.w.transpose();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(Z.rows());
  for (int j = 0; j < s.p(); ++j)
    for (Eigen::Index v = 0; v < Z.rows(); ++v) f(v) += s.a(j) * s.act.value(fields(v, j));
  return f / s.p();
}

std::int64_t predict_call_count() { return g_predict_calls; }

Eigen::MatrixXd batch_gradient(const StudentModel& s, const Batch& batch, Loss loss) {
  const Eigen::MatrixXd C = gradient_coefficients(s, batch.Z * s.w.transpose(), batch.y, loss);
  Eigen::MatrixXd G = C.transpose() * batch.Z;
  scale_rows(G, s.a, -1.0 / (s.p() * static_cast<double>(batch.Z.rows())));
  return G;
}

double batch_loss(const StudentModel& s, const Batch& batch, Loss loss) {
  const Eigen::VectorXd f = predict(s, batch.Z);
  const double n = static_cast<double>(batch.Z.rows());
  if (loss == Loss::square) return 0.5 * (batch.y - f).squaredNorm() / n;
  return (1.0 - batch.y.cwiseProduct(f).array()).sum() / n;
}

void step_projected(StudentModel& s, const Eigen::MatrixXd& grad, double gamma) {
  if (gamma < 0.0) throw Error(Errc::invalid_argument, "learning rate must be nonnegative");
  for (int j = 0; j < s.p(); ++j) {
    Eigen::RowVectorXd w = s.w.row(j) - gamma * grad.row(j);
    const double n = w.norm();
    if (!(n >= 1e-300))
      throw Error(Errc::zero_norm_update, "row " + std::to_string(j) + " has zero norm after update");
    s.w.row(j) = w / n;
  }
}

void step_spherical(StudentModel& s, const Eigen::MatrixXd& grad, double gamma) {
  Eigen::MatrixXd tangent = grad;
  for (int j = 0; j < s.p(); ++j) {
    const double wn2 = s.w.row(j).squaredNorm();
    tangent.row(j) -= grad.row(j).dot(s.w.row(j)) / wn2 * s.w.row(j);
  }
  step_projected(s, tangent, gamma);
}

double overlap_frobenius(const StudentModel& s, const TeacherModel& t) {
  return (s.w * t.w_star.transpose()).norm();
}

InitMode parse_init_mode(const std::string& text) {
  if (text == "cold") return InitMode::cold;
  if (text == "warm") return InitMode::warm;
  if (text == "sign_fixed_cold") return InitMode::sign_fixed_cold;
  if (text == "warm_matrix") return InitMode::warm_matrix;
  throw Error(Errc::invalid_argument, "unknown init mode '" + text + "'");
}

const char* init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::cold: return "cold";
    case InitMode::warm: return "warm";
    case InitMode::sign_fixed_cold: return "sign_fixed_cold";
    case InitMode::warm_matrix: return "warm_matrix";
  }
  return "?";
}

StudentModel init_student(int p, const Activation& act, const InitSpec& init,
                          const TeacherModel& teacher, Stream& rng) {
  if (p < 1) throw Error(Errc::invalid_argument, "p must be at least 1");
  const std::int64_t d = teacher.d();
  StudentModel s;
  s.act = act;
  s.a = Eigen::VectorXd::Ones(p);
  s.w.resize(p, d);
  switch (init.mode) {
    case InitMode::cold:
    case InitMode::sign_fixed_cold:
      for (int j = 0; j < p; ++j) s.w.row(j) = random_unit(d, rng);
      break;
    case InitMode::warm: {
      if (!(init.m0 > -1.0 && init.m0 < 1.0))
        throw Error(Errc::invalid_argument, "warm start needs m0 in (-1, 1)");
      if (teacher.k() != 1) throw Error(Errc::invalid_argument, "warm(m0) is defined for k = 1");
      const Eigen::RowVectorXd ws = teacher.w_star.row(0);
      for (int j = 0; j < p; ++j) {
        const Eigen::RowVectorXd u = orthogonalize(random_unit(d, rng), teacher.w_star);
        s.w.row(j) = init.m0 * ws + std::sqrt(1 - init.m0 * init.m0) * u;
      }
      break;
    }
    case InitMode::warm_matrix: {
      if (init.M.rows() != p || init.M.cols() != teacher.k())
        throw Error(Errc::invalid_argument, "warm_matrix overlaps must be p x k");
      Eigen::MatrixXd basis = teacher.w_star;
      for (int j = 0; j < p; ++j) {
        const double rest = 1.0 - init.M.row(j).squaredNorm();
        if (!(rest >= 0.0)) throw Error(Errc::invalid_argument, "warm_matrix row norm exceeds 1");
        const Eigen::RowVectorXd u = orthogonalize(random_unit(d, rng), basis);
        basis.conservativeResize(basis.rows() + 1, Eigen::NoChange);
        basis.row(basis.rows() - 1) = u;
        s.w.row(j) = init.M.row(j) * teacher.w_star + std::sqrt(rest) * u;
      }
      break;
    }
  }
  if (init.mode == InitMode::sign_fixed_cold && !teacher.target.is_multi_index()) {
    const HermiteProfile ps = hermite_coefficients(act);
    const HermiteProfile pt = hermite_coefficients(teacher.target);
    const int l = information_exponent(pt);
    const double cc = ps.coeffs[static_cast<std::size_t>(l)] * pt.coeffs[static_cast<std::size_t>(l)];
    if (l % 2 == 1 && cc != 0.0) {
      for (int j = 0; j < p; ++j) {
        const double m = s.w.row(j).dot(teacher.w_star.row(0));
        if (cc * m < 0.0) s.w.row(j) *= -1.0;
      }
    }
  }
  return s;
}

UpdateRule parse_update_rule(const std::string& text) {
  if (text == "projected") return UpdateRule::projected;
  if (text == "spherical") return UpdateRule::spherical;
  throw Error(Errc::invalid_argument, "update must be projected or spherical, got '" + text + "'");
}

const char* update_rule_name(UpdateRule rule) {
  return rule == UpdateRule::projected ? "projected" : "spherical";
}

Sampler parse_sampler(const std::string& text) {
  if (text == "explicit") return Sampler::explicit_gaussian;
  if (text == "projected") return Sampler::projected;
  throw Error(Errc::invalid_argument, "sampler must be explicit or projected, got '" + text + "'");
}

const char* sampler_name(Sampler s) { return s == Sampler::projected ? "projected" : "explicit"; }

RiskMode parse_risk_mode(const std::string& text) {
  if (text == "auto") return RiskMode::automatic;
  if (text == "analytic") return RiskMode::analytic;
  if (text == "mc") return RiskMode::mc;
  throw Error(Errc::invalid_argument, "test_risk must be auto, analytic or mc, got '" + text + "'");
}

const char* risk_mode_name(RiskMode m) {
  switch (m) {
    case RiskMode::automatic: return "auto";
    case RiskMode::analytic: return "analytic";
    case RiskMode::mc: return "mc";
  }
  return "?";
}

void TrainConfig::validate() const {
  regime.validate();
  if (!(eta > 0.0 && eta < 1.0)) throw Error(Errc::invalid_argument, "eta must lie in (0, 1)");
  if (t_max < 1) throw Error(Errc::invalid_argument, "t_max must be at least 1");
  if (record_stride < 1) throw Error(Errc::invalid_argument, "record_stride must be at least 1");
  if (n_test < 1) throw Error(Errc::invalid_argument, "n_test must be positive");
  if (adaptive) {
    if (!(adaptive->switch_fraction > 0.0 && adaptive->switch_fraction < 1.0))
      throw Error(Errc::invalid_argument, "switch_fraction must lie in (0, 1)");
    if (!(adaptive->lr_decay > 0.0 && adaptive->lr_decay <= 1.0))
      throw Error(Errc::invalid_argument, "lr_decay must lie in (0, 1]");
  }
}

namespace {

// Gradient from one fresh batch of n_b samples, drawn with the configured sampler.
class GradientSampler {
 public:
  GradientSampler(const TeacherModel& teacher, const TrainConfig& cfg)
      : teacher_(teacher), cfg_(cfg), n_b_(cfg.regime.n_b()) {}

  Eigen::MatrixXd operator()(const StudentModel& s, std::int64_t step, Loss loss) {
    Stream data = step_stream(cfg_.seed, cfg_.run_index, static_cast<std::uint64_t>(step), Substream::data);
    Stream noise = step_stream(cfg_.seed, cfg_.run_index, static_cast<std::uint64_t>(step), Substream::label_noise);
    if (cfg_.sampler == Sampler::explicit_gaussian)
      return batch_gradient(s, sample_batch(teacher_, n_b_, data, noise), loss);
    return projected(s, data, noise, step, loss);
  }

  std::int64_t n_b() const { return n_b_; }

 private:
  Eigen::MatrixXd projected(const StudentModel& s, Stream& data, Stream& noise, std::int64_t step,
                            Loss loss) {
    const int p = s.p(), k = teacher_.k();
    const std::int64_t d = teacher_.d();
    Eigen::MatrixXd span(d, k + p);
    span.leftCols(k) = teacher_.w_star.transpose();
    span.rightCols(p) = s.w.transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(span);
    qr.setThreshold(1e-12);
    const Eigen::Index r = qr.rank();
    const Eigen::MatrixXd B = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);  // d×r

    Eigen::MatrixXd U(n_b_, r);
    fill_normal(U, data);
    const Eigen::MatrixXd fields = U * (s.w * B).transpose();
    Eigen::VectorXd y = teacher_.labels(U * (teacher_.w_star * B).transpose());
    if (teacher_.noise > 0.0) {
      const double sd = std::sqrt(teacher_.noise);
      for (Eigen::Index v = 0; v < n_b_; ++v) y(v) += sd * noise.normal();
    }
    const Eigen::MatrixXd C = gradient_coefficients(s, fields, y, loss);
    Eigen::MatrixXd G = (C.transpose() * U) * B.transpose();

    // Σ_ν C_νj z_ν^⊥ is Gaussian in the complement with row covariance CᵀC.
    Stream orth = step_stream(cfg_.seed, cfg_.run_index, static_cast<std::uint64_t>(step), Substream::orthogonal);
    Eigen::MatrixXd N(p, d);
    fill_normal(N, orth);
    N -= (N * B) * B.transpose();
    G += psd_factor(C.transpose() * C) * N;
    scale_rows(G, s.a, -1.0 / (p * static_cast<double>(n_b_)));
    return G;
  }

  const TeacherModel& teacher_;
  const TrainConfig& cfg_;
  std::int64_t n_b_;
};

class RiskMeter {
 public:
  RiskMeter(const TeacherModel& teacher, const StudentModel& s0, const TrainConfig& cfg)
      : teacher_(teacher) {
    const bool analytic_ok = !teacher.target.is_multi_index() && s0.act == teacher.target &&
                             s0.act.analytic_kernels();
    if (cfg.test_risk == RiskMode::analytic && !analytic_ok)
      throw Error(Errc::unsupported_activation,
                  "analytic test risk needs matched He2/He3/erf student and teacher");
    analytic_ = cfg.test_risk == RiskMode::analytic ||
                (cfg.test_risk == RiskMode::automatic && analytic_ok);
    if (analytic_) {
      kernels_.emplace(s0.act, teacher.target);
    } else {
      Stream rng = step_stream(cfg.seed, cfg.run_index, kSetupStep, Substream::test_set);
      Z_.resize(cfg.n_test, teacher.d());
      fill_normal(Z_, rng);
      y_ = teacher.labels(Z_ * teacher.w_star.transpose());
    }
  }

  McEstimate operator()(const StudentModel& s) const {
    if (analytic_) {
      const SufficientStats st = SufficientStats::from_weights(s.w, teacher_.w_star, s.a, teacher_.a_star);
      return population_risk(st, teacher_.noise, *kernels_);
    }
    const Eigen::MatrixXd fields = Z_ * s.w.transpose();
    const Eigen::Index n = Z_.rows();
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      double f = 0.0;
      for (int j = 0; j < s.p(); ++j) f += s.a(j) * s.act.value(fields(v, j));
      const double e = y_(v) - f / s.p();
      const double l = 0.5 * e * e;
      sum += l;
      sum2 += l * l;
    }
    const double mean = sum / n;
    // Noiseless test labels; the noise contributes exactly Δ/2.
    return {mean + 0.5 * teacher_.noise,
            std::sqrt(std::max(0.0, sum2 / n - mean * mean) / std::max<Eigen::Index>(1, n - 1))};
  }

 private:
  const TeacherModel& teacher_;
  bool analytic_ = false;
  std::optional<KernelSet> kernels_;
  Eigen::MatrixXd Z_;
  Eigen::VectorXd y_;
};

TrajectoryPoint make_point(std::int64_t t, const StudentModel& s, const TeacherModel& teacher,
                           const McEstimate& risk, double gamma) {
  TrajectoryPoint pt;
  pt.t = t;
  pt.M = s.w * teacher.w_star.transpose();
  pt.overlap = pt.M.norm();
  pt.q_diag = s.w.rowwise().squaredNorm().transpose();
  pt.risk = risk.estimate;
  pt.risk_stderr = risk.stderr_;
  pt.gamma = gamma;
  return pt;
}

}  // namespace

Trajectory run(const TeacherModel& teacher, StudentModel s, const TrainConfig& cfg) {
  cfg.validate();
  if (s.w.cols() != teacher.d()) throw Error(Errc::invalid_argument, "student and teacher dimensions differ");
  const auto start = std::chrono::steady_clock::now();
  GradientSampler sampler(teacher, cfg);
  const RiskMeter meter(teacher, s, cfg);
  double gamma = cfg.regime.gamma();
  bool square_phase = !cfg.adaptive && cfg.loss == Loss::square;
  if (cfg.adaptive) square_phase = false;

  Trajectory tr;
  McEstimate risk = meter(s);
  const double initial_risk = risk.estimate;
  tr.points.push_back(make_point(0, s, teacher, risk, gamma));
  double overlap = tr.points.back().overlap;
  if (overlap >= cfg.eta) tr.t_eta_plus = 0;

  std::int64_t t = 0;
  while (t < cfg.t_max && !(tr.t_eta_plus && cfg.stop_at_recovery)) {
    Loss loss = cfg.loss;
    if (cfg.adaptive) {
      loss = square_phase ? Loss::square : Loss::correlation;
      if (square_phase) gamma *= cfg.adaptive->lr_decay;
    }
    try {
      const Eigen::MatrixXd G = sampler(s, t, loss);
      if (cfg.update == UpdateRule::projected)
        step_projected(s, G, gamma);
      else
        step_spherical(s, G, gamma);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail() + " at step " + std::to_string(t));
    }
    ++t;
    tr.samples_consumed += sampler.n_b();
    overlap = overlap_frobenius(s, teacher);
    if (!tr.t_eta_plus && overlap >= cfg.eta) tr.t_eta_plus = t;
    const bool need_risk_for_switch = cfg.adaptive && !square_phase;
    const bool last = t == cfg.t_max || (tr.t_eta_plus && cfg.stop_at_recovery);
    const bool record = t % cfg.record_stride == 0 || last;
    if (need_risk_for_switch || record) risk = meter(s);
    if (need_risk_for_switch && risk.estimate < cfg.adaptive->switch_fraction * initial_risk) {
      square_phase = true;
      tr.switch_step = t;
    }
    if (record) tr.points.push_back(make_point(t, s, teacher, risk, gamma));
  }
  tr.steps_taken = t;
  tr.censored = !tr.t_eta_plus.has_value();
  tr.final_overlap = overlap;
  tr.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return tr;
}

Instance make_instance(const ProblemSpec& problem, const TrainConfig& cfg) {
  Stream teacher_rng = step_stream(cfg.seed, cfg.run_index, kSetupStep, Substream::teacher);
  Instance inst{TeacherModel::orthonormal(problem.k, cfg.regime.d, problem.teacher, problem.noise, teacher_rng), {}};
  if (problem.a_star.size() > 0) {
    if (problem.a_star.size() != problem.k) throw Error(Errc::invalid_argument, "a_star must have k entries");
    inst.teacher.a_star = problem.a_star;
  }
  Stream init_rng = step_stream(cfg.seed, cfg.run_index, kSetupStep, Substream::init);
  inst.student = init_student(problem.p, problem.student, cfg.init, inst.teacher, init_rng);
  if (problem.a.size() > 0) {
    if (problem.a.size() != problem.p) throw Error(Errc::invalid_argument, "a must have p entries");
    inst.student.a = problem.a;
  }
  return inst;
}

Trajectory run_problem(const ProblemSpec& problem, const TrainConfig& cfg) {
  cfg.validate();
  Instance inst = make_instance(problem, cfg);
  return run(inst.teacher, std::move(inst.student), cfg);
}

}  // namespace mindex
