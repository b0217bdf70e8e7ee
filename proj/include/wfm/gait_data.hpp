#pragma once

// Per-subject gait trials: ankle angle and reference inverse-dynamics torque
// over one gait cycle, normalised to phase in [0, 1].
//
// CSV layout:
//
//   # subject_id = S01
//   # sex = F
//   # body_mass_kg = 61.5
//   # walking_speed_mps = 1.25
//   # cycle_duration_s = 1.08
//   # torque_unit = N*m
//   phase,theta_rad,tau_ref
//   0,0.0123,-1.5
//   ...
//
// A `time_s` column may replace `phase`; it is divided by cycle_duration_s.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wfm {

enum class Sex { kFemale, kMale };

char to_char(Sex sex);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double value);

using HeaderMap = std::map<std::string, std::string>;

struct GaitTrial {
  std::string subject_id;
  Sex sex{Sex::kFemale};
  double body_mass{};  // [kg]
  std::optional<double> walking_speed;  // [m/s], metadata only
  double cycle_duration{};  // [s]
  std::string torque_unit{"unspecified"};
  Eigen::VectorXd phase;
  Eigen::VectorXd theta;    // [rad]
  Eigen::VectorXd tau_ref;  // as supplied

  Eigen::Index size() const { return phase.size(); }

  /// Throws DomainError on the first violated invariant.
  void validate() const;
};

struct SubjectSplit {
  std::vector<GaitTrial> train;
  std::vector<GaitTrial> test;

  /// Both sides non-empty, subject ids disjoint across sides.
  void validate() const;
};

inline constexpr Eigen::Index kMinTrialSamples = 11;
inline constexpr Eigen::Index kDefaultGridSize = 101;

/// Parses a trial. Keys in `overrides` replace (or supply) `# key = value`
/// header entries. Throws ParseError naming the line or field at fault.
GaitTrial load_trial(std::istream& source, const HeaderMap& overrides = {});
GaitTrial load_trial_file(const std::string& path, const HeaderMap& overrides = {});

/// Writes the CSV layout above with shortest round-trip number formatting.
void write_trial(std::ostream& out, const GaitTrial& trial);
void write_trial_file(const std::string& path, const GaitTrial& trial);

/// Linear interpolation onto n uniformly spaced phases from 0 to 1.
GaitTrial resample_trial(const GaitTrial& trial, Eigen::Index n);

/// Ankle angle at an arbitrary phase, linear between samples.
double theta_at(const GaitTrial& trial, double phase);

/// Trapezoidal mean of theta over the cycle.
double mean_theta(const GaitTrial& trial);

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred,
            const Eigen::Ref<const Eigen::VectorXd>& ref);

/// Uniform phase grid of n points on [0, 1], endpoints exact.
Eigen::VectorXd uniform_phase_grid(Eigen::Index n);

/// Linear interpolation of (xs, ys) at x; xs strictly increasing, x clamped to its range.
double interpolate_linear(const Eigen::Ref<const Eigen::VectorXd>& xs,
                          const Eigen::Ref<const Eigen::VectorXd>& ys, double x);

}  // namespace wfm
