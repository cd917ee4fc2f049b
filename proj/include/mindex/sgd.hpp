#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mindex/activation.hpp"
#include "mindex/ode.hpp"
#include "mindex/rng.hpp"

namespace mindex {

struct TeacherModel {
  Eigen::MatrixXd w_star;  // k×d, unit rows
  Activation target = Activation::hermite(3);
  Eigen::VectorXd a_star;  // committee weights, f* = (1/k) Σ a*_r h(λ*_r)
  double noise = 0.0;      // label-noise variance Δ

  int k() const { return static_cast<int>(w_star.rows()); }
  std::int64_t d() const { return w_star.cols(); }
  // Noiseless labels from teacher fields (n×k).
  Eigen::VectorXd labels(const Eigen::MatrixXd& fields) const;

  static TeacherModel orthonormal(int k, std::int64_t d, Activation target, double noise,
                                  Stream& rng);
};

struct StudentModel {
  Eigen::MatrixXd w;  // p×d
  Eigen::VectorXd a;  // fixed readout
  Activation act = Activation::hermite(3);

  int p() const { return static_cast<int>(w.rows()); }
};

struct Batch {
  Eigen::MatrixXd Z;  // n_b×d
  Eigen::VectorXd y;
};

Batch sample_batch(const TeacherModel& teacher, std::int64_t n_b, Stream& data, Stream& noise);
Eigen::VectorXd predict(const StudentModel& student, const Eigen::MatrixXd& Z);
// Row j = −(a_j/(p n_b)) Σ_ν E^ν σ'(λ_j^ν) z^ν with E = y − f (square) or E = y (correlation).
Eigen::MatrixXd batch_gradient(const StudentModel& student, const Batch& batch, Loss loss);
// Square: (1/2n_b) Σ (y − f)²; correlation: (1/n_b) Σ (1 − y f).
double batch_loss(const StudentModel& student, const Batch& batch, Loss loss);

// Number of predict() evaluations made so far by this thread (instrumentation for tests).
std::int64_t predict_call_count();

void step_projected(StudentModel& student, const Eigen::MatrixXd& grad, double gamma);
void step_spherical(StudentModel& student, const Eigen::MatrixXd& grad, double gamma);

// ‖W W*ᵀ‖_F.
double overlap_frobenius(const StudentModel& student, const TeacherModel& teacher);

enum class InitMode { cold, warm, sign_fixed_cold, warm_matrix };
InitMode parse_init_mode(const std::string& text);
const char* init_mode_name(InitMode mode);

struct InitSpec {
  InitMode mode = InitMode::cold;
  double m0 = 0.0;    // warm
  Eigen::MatrixXd M;  // warm_matrix: p×k target overlaps
};

StudentModel init_student(int p, const Activation& act, const InitSpec& init,
                          const TeacherModel& teacher, Stream& rng);

enum class UpdateRule { projected, spherical };
UpdateRule parse_update_rule(const std::string& text);
const char* update_rule_name(UpdateRule rule);

// explicit_gaussian draws full d-dimensional covariates. projected draws the batch's
// components in span(W, W*) exactly and the orthogonal remainder of the gradient as one
// Gaussian matrix with the matching covariance; equal in distribution, O(n_b (p+k) + p d).
enum class Sampler { explicit_gaussian, projected };
Sampler parse_sampler(const std::string& text);
const char* sampler_name(Sampler s);

enum class RiskMode { automatic, analytic, mc };
RiskMode parse_risk_mode(const std::string& text);
const char* risk_mode_name(RiskMode m);

struct AdaptiveSchedule {
  double switch_fraction = 0.6;
  double lr_decay = 0.995;
};

struct TrainConfig {
  Loss loss = Loss::square;
  UpdateRule update = UpdateRule::projected;
  std::optional<AdaptiveSchedule> adaptive;
  ScalingRegime regime;
  std::int64_t t_max = 1000;
  double eta = 0.5;
  InitSpec init;
  std::int64_t record_stride = 1;
  std::uint64_t seed = 1;
  std::uint64_t run_index = 0;
  RiskMode test_risk = RiskMode::automatic;
  std::int64_t n_test = 10000;
  Sampler sampler = Sampler::projected;
  bool stop_at_recovery = true;

  void validate() const;
};

struct TrajectoryPoint {
  std::int64_t t = 0;
  double overlap = 0.0;
  Eigen::MatrixXd M;
  Eigen::VectorXd q_diag;
  double risk = 0.0;
  double risk_stderr = 0.0;
  double gamma = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  std::optional<std::int64_t> t_eta_plus;
  bool censored = false;
  std::int64_t steps_taken = 0;
  std::int64_t samples_consumed = 0;
  std::optional<std::int64_t> switch_step;  // adaptive: first square-loss step
  double final_overlap = 0.0;
  double wall_time_s = 0.0;
};

Trajectory run(const TeacherModel& teacher, StudentModel student, const TrainConfig& config);

// Problem description shared by the CLI and sweeps.
struct ProblemSpec {
  int p = 1;
  int k = 1;
  Activation student = Activation::hermite(3);
  Activation teacher = Activation::hermite(3);
  double noise = 0.0;
  Eigen::VectorXd a;       // empty: ones
  Eigen::VectorXd a_star;  // empty: ones
};

struct Instance {
  TeacherModel teacher;
  StudentModel student;
};

// Teacher and initial student drawn from the run's setup streams.
Instance make_instance(const ProblemSpec& problem, const TrainConfig& config);
Trajectory run_problem(const ProblemSpec& problem, const TrainConfig& config);

// Step index reserved for per-run setup draws (teacher, init, test set).
inline constexpr std::uint64_t kSetupStep = ~std::uint64_t{0};

}  // namespace mindex
