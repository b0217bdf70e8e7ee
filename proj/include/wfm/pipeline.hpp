#pragma once

// Gait-cycle simulation of the two-muscle ankle, synthetic reference data,
// the activation-fitting objective and the train/test RMSE report.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wfm/activation.hpp"
#include "wfm/ankle_geometry.hpp"
#include "wfm/gait_data.hpp"
#include "wfm/wfm_core.hpp"

namespace wfm {

using MuscleParams = AntagonistPair<WfmParams<>>;
using MuscleGeometry = AntagonistPair<AttachmentGeometry<>>;
using ActivationPair = AntagonistPair<ActivationCurve>;

struct SimulationConfig {
  int steps_per_cycle{2000};
  int warmup_cycles{2};
  Eigen::Index output_grid{kDefaultGridSize};

  void validate() const;
};

/// Split of the muscle-tendon length into tendon slack, titin rest and CE
/// optimal length at the calibration angle.
struct RestFractions {
  double tendon{0.60};
  double titin{0.05};
  double contractile{0.35};

  void validate() const;
};

/// Shared (subject-independent) model description. Per subject only F_max
/// changes, and the rest lengths when calibration is on.
struct MuscleModel {
  MuscleParams params;
  MuscleGeometry geometry;
  RestFractions rest;
  bool calibrate_rest_lengths{true};
  double f_max_scale{1.0};  // multiplies the 5 m g rule

  void validate() const;

  /// F_max = f_max_scale * 5 m g from the trial's body mass; rest lengths re-derived at the
  /// trial's mean ankle angle when calibrate_rest_lengths is set.
  MuscleParams subject_params(const GaitTrial& trial) const;
};

/// Sets l_t_slack, l_ts_rest and l_ce_opt so the chain is exactly at rest
/// when the joint sits at `theta`.
WfmParams<> calibrate_rest_lengths(WfmParams<> params, const AttachmentGeometry<>& geometry,
                                   double theta, const RestFractions& rest);

WfmParams<> default_muscle_params(Side side, double body_mass = 70.0);
MuscleModel default_model();
ActivationPair default_activation_templates(double anterior = 0.05, double posterior = 0.1);

struct TorqueTrace {
  Eigen::VectorXd phase;
  Eigen::VectorXd tau_model;
};

/// Starts each muscle at its static equilibrium for phase 0, runs
/// `warmup_cycles` full cycles and records the net torque over one more,
/// resampled onto `output_grid` phases.
TorqueTrace simulate_gait(const GaitTrial& trial, const ActivationPair& curves,
                          const MuscleParams& params, const MuscleGeometry& geometry,
                          const SimulationConfig& sim);

/// Reference torque on the simulation output grid.
Eigen::VectorXd reference_on_grid(const GaitTrial& trial, Eigen::Index grid);

// ---------------------------------------------------------------------------
// Synthetic data

using ThetaProfile = std::function<double(double)>;

/// Smooth periodic ankle trajectory: heel-strike plantarflexion, stance
/// dorsiflexion, push-off plantarflexion, swing return.
struct GaitAngleShape {
  double scale{1.0};
  double offset{0.0};     // [rad]
  double phase_shift{0.0};

  double operator()(double phase) const;
};

struct SyntheticSubject {
  std::string subject_id;
  Sex sex{Sex::kFemale};
  double body_mass{70.0};
  double cycle_duration{1.1};
  double walking_speed{1.25};
  ThetaProfile theta_profile;
};

/// theta sampled on the output grid; tau_ref is the simulated torque plus
/// i.i.d. Gaussian noise of standard deviation `noise_sd`.
GaitTrial generate_synthetic_trial(const ActivationPair& curves, const MuscleModel& model,
                                   const SyntheticSubject& subject, double noise_sd,
                                   std::uint64_t seed, const SimulationConfig& sim,
                                   const std::string& torque_unit = "N*m");

/// Subjects with randomised mass, cadence and angle trajectory. Sexes follow
/// F, F, M, M for training and F, F, M, F for testing, repeating.
SubjectSplit generate_synthetic_split(const ActivationPair& curves, const MuscleModel& model,
                                      int n_train, int n_test, double noise_sd,
                                      std::uint64_t seed, const SimulationConfig& sim);

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

// Joint kinematics sampled on the half-step grid of a fixed-step simulation.
struct PreparedKinematics {
  int steps{};
  double dt{};
  Eigen::VectorXd l_mtu_anterior;  // 2 * steps + 1 samples
  Eigen::VectorXd l_mtu_posterior;
  Eigen::VectorXd arm_anterior;    // steps + 1 samples
  Eigen::VectorXd arm_posterior;
};

PreparedKinematics prepare_kinematics(const GaitTrial& trial, const MuscleGeometry& geometry,
                                      int steps);

Eigen::VectorXd activation_on_half_steps(const ActivationCurve& curve, int steps);

Eigen::VectorXd simulate_prepared(const PreparedKinematics& kin, const Eigen::VectorXd& act_anterior,
                                  const Eigen::VectorXd& act_posterior, const MuscleParams& params,
                                  const SimulationConfig& sim);

// Several trials sharing one step count, simulated in lockstep; one torque
// column per trial. Column k equals simulate_prepared on member k.
Eigen::MatrixXd simulate_prepared_batch(std::span<const PreparedKinematics* const> kin,
                                        const Eigen::VectorXd& act_anterior,
                                        const Eigen::VectorXd& act_posterior,
                                        std::span<const MuscleParams* const> params,
                                        const SimulationConfig& sim);

}  // namespace detail

/// Mean-RMSE objective over a fixed set of training trials. The search
/// vector is [anterior amplitude, posterior amplitude] or, in extended mode,
/// [anterior, posterior, F_max scale, stiffness scale].
class FitProblem {
 public:
  FitProblem(std::vector<GaitTrial> trials, ActivationPair templates, MuscleModel model,
             SimulationConfig sim, bool extended = false);

  Eigen::Index dimension() const { return extended_ ? 4 : 2; }
  bool extended() const { return extended_; }
  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;

  double operator()(const Eigen::VectorXd& x) const;
  Eigen::VectorXd per_trial_rmse(const Eigen::VectorXd& x) const;

  ActivationPair curves_for(const Eigen::VectorXd& x) const;
  /// Model with the extended-mode scales folded into the shared parameters.
  MuscleModel model_for(const Eigen::VectorXd& x) const;

  const std::vector<GaitTrial>& trials() const { return trials_; }

 private:
  struct PreparedTrial {
    detail::PreparedKinematics kinematics;
    MuscleParams params;
    Eigen::VectorXd reference;
  };

  void check(const Eigen::VectorXd& x) const;

  std::vector<GaitTrial> trials_;
  ActivationPair templates_;
  MuscleModel model_;
  SimulationConfig sim_;
  bool extended_;
  std::vector<PreparedTrial> prepared_;
};

inline constexpr double kScaleLower = 0.5;
inline constexpr double kScaleUpper = 2.0;

double fit_objective(const Eigen::VectorXd& amplitudes, const FitProblem& problem);

// ---------------------------------------------------------------------------
// Report

enum class SplitTag { kTrain, kTest };

struct ReportRow {
  std::string subject_id;
  SplitTag split{SplitTag::kTrain};
  Sex sex{Sex::kFemale};
  double rmse{};
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
  double train_mean{};
  double test_mean{};
  std::string torque_unit;
};

/// Computes the per-split means. Throws DomainError if either split is empty.
EvaluationReport make_report(std::vector<ReportRow> rows, std::string torque_unit);

EvaluationReport evaluate_split(const SubjectSplit& split, const ActivationPair& curves,
                                const MuscleModel& model, const SimulationConfig& sim);

void render_report_text(std::ostream& out, const EvaluationReport& report);
void write_report_csv(std::ostream& out, const EvaluationReport& report);
void write_trace_csv(std::ostream& out, const TorqueTrace& trace, const Eigen::VectorXd& reference);

}  // namespace wfm
