#include "wfm/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "wfm/errors.hpp"
#include "wfm/pso.hpp"

namespace wfm {

void SimulationConfig::validate() const {
  if (steps_per_cycle < 100) throw DomainError("simulation.steps_per_cycle must be >= 100");
  if (warmup_cycles < 0) throw DomainError("simulation.warmup_cycles must be >= 0");
  if (output_grid < 2) throw DomainError("simulation.output_grid must be >= 2");
}

void RestFractions::validate() const {
  if (!(tendon > 0.0) || !(titin > 0.0) || !(contractile > 0.0)) {
    throw DomainError("rest_fractions must all be > 0");
  }
  if (std::abs(tendon + titin + contractile - 1.0) > 1e-9) {
    throw DomainError("rest_fractions must sum to 1");
  }
}

void MuscleModel::validate() const {
  for (Side side : {Side::kAnterior, Side::kPosterior}) {
    try {
      params[side].validate();
      geometry[side].validate();
    } catch (const DomainError& e) {
      throw DomainError(std::string(to_string(side)) + ": " + e.what());
    }
    if (geometry[side].side != side) {
      throw DomainError(std::string(to_string(side)) + " geometry carries the wrong side tag");
    }
  }
  rest.validate();
  if (!(f_max_scale > 0.0) || !std::isfinite(f_max_scale)) throw DomainError("f_max_scale must be > 0");
}

WfmParams<> calibrate_rest_lengths(WfmParams<> params, const AttachmentGeometry<>& geometry,
                                   double theta, const RestFractions& rest) {
  const double length = muscle_length(theta, geometry);
  params.l_t_slack = rest.tendon * length;
  params.l_ts_rest = rest.titin * length;
  params.l_ce_opt = rest.contractile * length;
  return params;
}

MuscleParams MuscleModel::subject_params(const GaitTrial& trial) const {
  MuscleParams out = params;
  const double f_max = f_max_scale * f_max_from_mass(trial.body_mass);
  const double theta_rest = calibrate_rest_lengths ? mean_theta(trial) : 0.0;
  for (Side side : {Side::kAnterior, Side::kPosterior}) {
    out[side].f_max = f_max;
    if (calibrate_rest_lengths) {
      out[side] = wfm::calibrate_rest_lengths(out[side], geometry[side], theta_rest, rest);
    }
  }
  return out;
}

WfmParams<> default_muscle_params(Side side, double body_mass) {
  WfmParams<> p;
  p.k_ss = side == Side::kPosterior ? 2.0e5 : 1.0e5;
  p.k_ts_passive = 0.05 * p.k_ss;
  p.k_ts_active = 0.45 * p.k_ss;
  p.c_ce = 1.0e3;
  p.f_max = f_max_from_mass(body_mass);
  p.fl_width = 0.45;
  return calibrate_rest_lengths(p, default_geometry(side), 0.0, RestFractions{});
}

MuscleModel default_model() {
  MuscleModel model;
  model.params = {default_muscle_params(Side::kAnterior), default_muscle_params(Side::kPosterior)};
  model.geometry = {default_geometry(Side::kAnterior), default_geometry(Side::kPosterior)};
  return model;
}

ActivationPair default_activation_templates(double anterior, double posterior) {
  return {default_activation_template(Side::kAnterior, anterior),
          default_activation_template(Side::kPosterior, posterior)};
}

// ---------------------------------------------------------------------------

namespace detail {

PreparedKinematics prepare_kinematics(const GaitTrial& trial, const MuscleGeometry& geometry,
                                      int steps) {
  PreparedKinematics kin;
  kin.steps = steps;
  kin.dt = trial.cycle_duration / steps;
  const int half_steps = 2 * steps;
  kin.l_mtu_anterior.resize(half_steps + 1);
  kin.l_mtu_posterior.resize(half_steps + 1);
  kin.arm_anterior.resize(steps + 1);
  kin.arm_posterior.resize(steps + 1);
  for (int j = 0; j <= half_steps; ++j) {
    const double phase = static_cast<double>(j) / half_steps;
    const double theta = theta_at(trial, phase);
    try {
      kin.l_mtu_anterior(j) = muscle_length(theta, geometry.anterior);
      kin.l_mtu_posterior(j) = muscle_length(theta, geometry.posterior);
      if (j % 2 == 0) {
        kin.arm_anterior(j / 2) = moment_arm(theta, geometry.anterior);
        kin.arm_posterior(j / 2) = moment_arm(theta, geometry.posterior);
      }
    } catch (const GeometryRangeError& e) {
      std::ostringstream msg;
      msg << "trial '" << trial.subject_id << "' at gait phase " << phase << ": " << e.what();
      throw GeometryRangeError(msg.str());
    }
  }
  return kin;
}

Eigen::VectorXd activation_on_half_steps(const ActivationCurve& curve, int steps) {
  const int half_steps = 2 * steps;
  Eigen::VectorXd a(half_steps + 1);
  for (int j = 0; j <= half_steps; ++j) {
    a(j) = evaluate_activation(curve, static_cast<double>(j) / half_steps);
  }
  return a;
}

namespace {

struct MuscleDrive {
  const Eigen::VectorXd* l_mtu;  // half-step samples
  const Eigen::VectorXd* activation;
  const WfmParams<>* params;
  double dt;
  Side side;
};

// Value at fraction s of a step from samples at its start, middle and end.
double quadratic_at(double y0, double y1, double y2, double s) {
  return y0 * (2.0 * s - 1.0) * (s - 1.0) + 4.0 * y1 * s * (1.0 - s) + y2 * s * (2.0 * s - 1.0);
}

StageInputs<> sub_step_inputs(const StageInputs<>& in, double from, double to) {
  StageInputs<> out;
  const std::array<double, 3> at{from, 0.5 * (from + to), to};
  for (int k = 0; k < 3; ++k) {
    out.l_mtu[k] = quadratic_at(in.l_mtu[0], in.l_mtu[1], in.l_mtu[2], at[k]);
    out.activation[k] =
        std::clamp(quadratic_at(in.activation[0], in.activation[1], in.activation[2], at[k]), 0.0, 1.0);
  }
  return out;
}

// One RK4 step that splits where the tendon-titin chain goes taut or slack.
// The force law has a kink there, and stepping across it would cost the
// integrator two orders of accuracy. The crossing is located by Illinois
// regula falsi on the slack margin of a partial step.
// `split` receives the step fraction at the crossing, or -1 without one.
MuscleState<> step_across_slack(const MuscleState<>& s, const StageInputs<>& in, double dt,
                                const WfmParams<>& p, double& split) {
  split = -1.0;
  const double rest = p.l_t_slack + p.l_ts_rest;
  const MuscleState<> whole = step_muscle(s, in, dt, p);
  const double before = in.l_mtu[0] - s.l_ce - rest;
  const double after = in.l_mtu[2] - whole.l_ce - rest;
  if ((before > 0.0) == (after > 0.0)) return whole;

  auto margin = [&](double f) {
    const MuscleState<> part = step_muscle(s, sub_step_inputs(in, 0.0, f), f * dt, p);
    return quadratic_at(in.l_mtu[0], in.l_mtu[1], in.l_mtu[2], f) - part.l_ce - rest;
  };
  double lo = 0.0, m_lo = before;
  double hi = 1.0, m_hi = after;
  int last_side = 0;
  for (int it = 0; it < 30 && hi - lo > 1e-12; ++it) {
    double f = (lo * m_hi - hi * m_lo) / (m_hi - m_lo);
    if (!(f > lo && f < hi)) f = 0.5 * (lo + hi);
    const double m_f = margin(f);
    if (m_f == 0.0) {
      lo = hi = f;
      break;
    }
    if ((m_f > 0.0) == (m_lo > 0.0)) {
      lo = f;
      m_lo = m_f;
      if (last_side == -1) m_hi *= 0.5;
      last_side = -1;
    } else {
      hi = f;
      m_hi = m_f;
      if (last_side == 1) m_lo *= 0.5;
      last_side = 1;
    }
  }
  split = std::clamp(0.5 * (lo + hi), 1e-6, 1.0 - 1e-6);
  const MuscleState<> first = step_muscle(s, sub_step_inputs(in, 0.0, split), split * dt, p);
  MuscleState<> second = step_muscle(first, sub_step_inputs(in, split, 1.0), (1.0 - split) * dt, p);
  second.t = whole.t;
  return second;
}

// Newton step on the cycle map P of one muscle: P(x) - x = 0 with P'
// supplied by the tangent carried through the cycle. A flow map is
// increasing, and a neutral map (P' near 1, a muscle idle and slack all
// cycle) has no isolated fixed point to jump to.
double periodic_start(double start, double end, double tangent) {
  if (!(tangent >= 0.0 && tangent < 0.95)) return end;
  const double x = start + (end - start) / (1.0 - tangent);
  return x > 0.0 ? x : end;
}

double slope_integral(double start, double end, double split, double dt) {
  return split < 0.0 ? 0.5 * dt * (start + end) : dt * (split * start + (1.0 - split) * end);
}

// Tension of each driven muscle at every step of the recorded cycle, one
// column per drive.
Eigen::MatrixXd simulate_forces(const std::vector<MuscleDrive>& drives, int steps, int warmup) {
  const std::size_t n = drives.size();
  std::vector<double> inv_damping(n), inv_width(n);
  // Series stiffness depends only on the activation and the spring constants,
  // so drives with the same curve and springs share one table.
  std::vector<Eigen::VectorXd> tables;
  std::vector<const Eigen::VectorXd*> k_series(n);
  tables.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    const auto& d = drives[m];
    const auto& p = *d.params;
    p.validate();
    if (!(p.k_ss + p.k_ts_passive > 0.0)) throw DegenerateParametersError("k_ss + k_ts(0) must be positive");
    if (!(d.l_mtu->minCoeff() > 0.0)) throw GeometryRangeError("muscle-tendon length must stay positive");
    if (!(d.activation->minCoeff() >= 0.0 && d.activation->maxCoeff() <= 1.0)) {
      throw DomainError("activation must lie in [0, 1]");
    }
    inv_damping[m] = 1.0 / p.c_ce;
    inv_width[m] = 1.0 / (p.fl_width * p.l_ce_opt);
    for (std::size_t k = 0; k < m && !k_series[m]; ++k) {
      const auto& o = drives[k];
      if (o.activation == d.activation && o.params->k_ss == p.k_ss &&
          o.params->k_ts_passive == p.k_ts_passive && o.params->k_ts_active == p.k_ts_active) {
        k_series[m] = k_series[k];
      }
    }
    if (!k_series[m]) {
      const Eigen::VectorXd& a = *d.activation;
      Eigen::VectorXd k(a.size());
      for (Eigen::Index j = 0; j < a.size(); ++j) {
        k(j) = detail::series_stiffness(detail::titin_stiffness_unchecked(a(j), p), p);
      }
      tables.push_back(std::move(k));
      k_series[m] = &tables.back();
    }
  }

  std::vector<MuscleState<>> states(n);
  std::vector<double> cycle_start(n);
  // log of d l_ce / d (cycle start): integral of the rate's slope, trapezoidal
  // except on steps that cross the slack kink, where each side gets its own
  // one-sided slope.
  std::vector<double> log_tangent(n), last_slope(n), last_split(n);
  for (std::size_t m = 0; m < n; ++m) {
    const auto& d = drives[m];
    states[m] = {equilibrium_ce_length((*d.l_mtu)(0), (*d.activation)(0), *d.params), 0.0};
  }
  auto coefficients = [&](std::size_t m, int j) {
    const auto& d = drives[m];
    return detail::RateCoefficients<double>((*d.l_mtu)(j), (*k_series[m])(j),
                                            (*d.activation)(j) * d.params->f_max, inv_damping[m],
                                            inv_width[m]);
  };
  auto force_at = [&](std::size_t m, int j) {
    return detail::chain_force((*drives[m].l_mtu)(j), states[m].l_ce, (*k_series[m])(j), *drives[m].params);
  };
  auto closing_slope = [&](std::size_t m) {
    const auto c = coefficients(m, 2 * steps);
    const double l_ce = states[m].l_ce;
    return c.slope(l_ce, c(l_ce, *drives[m].params), *drives[m].params);
  };

  Eigen::MatrixXd force(steps + 1, static_cast<Eigen::Index>(n));
  int i = 0;
  std::size_t m = 0;
  try {
    for (int cycle = 0; cycle <= warmup; ++cycle) {
      const bool record = cycle == warmup;
      for (m = 0; m < n; ++m) {
        cycle_start[m] = states[m].l_ce;
        log_tangent[m] = 0.0;
        if (record) force(0, static_cast<Eigen::Index>(m)) = force_at(m, 0);
      }
      for (i = 0; i < steps; ++i) {
        for (m = 0; m < n; ++m) {
          const auto& d = drives[m];
          const auto& p = *d.params;
          const auto start = coefficients(m, 2 * i);
          const auto end = coefficients(m, 2 * i + 2);
          const MuscleState<> from = states[m];
          double k1 = 0.0;
          states[m] = detail::rk4_step(from, start, coefficients(m, 2 * i + 1), end, d.dt, p, &k1);
          if (!record) {
            const double slope = start.slope(from.l_ce, k1, p);
            if (i > 0) log_tangent[m] += slope_integral(last_slope[m], slope, last_split[m], d.dt);
            last_slope[m] = slope;
          }
          const double rest = p.l_t_slack + p.l_ts_rest;
          last_split[m] = -1.0;
          if ((start.l_mtu - from.l_ce - rest > 0.0) != (end.l_mtu - states[m].l_ce - rest > 0.0)) {
            const auto& l = *d.l_mtu;
            const auto& a = *d.activation;
            StageInputs<> in;
            in.l_mtu = {l(2 * i), l(2 * i + 1), l(2 * i + 2)};
            in.activation = {a(2 * i), a(2 * i + 1), a(2 * i + 2)};
            states[m] = step_across_slack(from, in, d.dt, p, last_split[m]);
          }
        }
        if (record) {
          for (m = 0; m < n; ++m) force(i + 1, static_cast<Eigen::Index>(m)) = force_at(m, 2 * i + 2);
        }
      }
      if (!record) {
        for (m = 0; m < n; ++m) {
          const double log_t =
              log_tangent[m] + slope_integral(last_slope[m], closing_slope(m), last_split[m], drives[m].dt);
          states[m].l_ce = periodic_start(cycle_start[m], states[m].l_ce, std::exp(log_t));
        }
      }
    }
  } catch (const IntegrationError& e) {
    std::ostringstream msg;
    msg << to_string(drives[m].side) << " muscle failed at gait phase " << static_cast<double>(i) / steps
        << ": " << e.what();
    throw IntegrationError(msg.str(), e.time());
  }
  return force;
}

Eigen::VectorXd torque_on_output_grid(const PreparedKinematics& kin, const Eigen::VectorXd& f_a,
                                      const Eigen::VectorXd& f_p, Eigen::Index grid_size) {
  const Eigen::VectorXd torque =
      kin.arm_anterior.cwiseProduct(f_a) - kin.arm_posterior.cwiseProduct(f_p);
  const Eigen::VectorXd step_phase = uniform_phase_grid(kin.steps + 1);
  const Eigen::VectorXd grid = uniform_phase_grid(grid_size);
  Eigen::VectorXd out(grid_size);
  for (Eigen::Index k = 0; k < grid_size; ++k) {
    out(k) = interpolate_linear(step_phase, torque, grid(k));
  }
  return out;
}

}  // namespace

Eigen::VectorXd simulate_prepared(const PreparedKinematics& kin, const Eigen::VectorXd& act_anterior,
                                  const Eigen::VectorXd& act_posterior, const MuscleParams& params,
                                  const SimulationConfig& sim) {
  const PreparedKinematics* one[] = {&kin};
  const MuscleParams* one_params[] = {&params};
  return simulate_prepared_batch(one, act_anterior, act_posterior, one_params, sim).col(0);
}

Eigen::MatrixXd simulate_prepared_batch(std::span<const PreparedKinematics* const> kin,
                                        const Eigen::VectorXd& act_anterior,
                                        const Eigen::VectorXd& act_posterior,
                                        std::span<const MuscleParams* const> params,
                                        const SimulationConfig& sim) {
  if (kin.size() != params.size()) throw DomainError("batch size mismatch");
  std::vector<MuscleDrive> drives;
  drives.reserve(2 * kin.size());
  for (std::size_t k = 0; k < kin.size(); ++k) {
    if (kin[k]->steps != kin.front()->steps) throw DomainError("batch members differ in step count");
    drives.push_back({&kin[k]->l_mtu_anterior, &act_anterior, &params[k]->anterior, kin[k]->dt,
                      Side::kAnterior});
    drives.push_back({&kin[k]->l_mtu_posterior, &act_posterior, &params[k]->posterior, kin[k]->dt,
                      Side::kPosterior});
  }
  if (kin.empty()) return Eigen::MatrixXd(sim.output_grid, 0);
  const int steps = kin.front()->steps;
  const Eigen::MatrixXd forces = simulate_forces(drives, steps, sim.warmup_cycles);
  Eigen::MatrixXd out(sim.output_grid, static_cast<Eigen::Index>(kin.size()));
  for (std::size_t k = 0; k < kin.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    out.col(c) = torque_on_output_grid(*kin[k], forces.col(2 * c), forces.col(2 * c + 1), sim.output_grid);
  }
  return out;
}

}  // namespace detail

TorqueTrace simulate_gait(const GaitTrial& trial, const ActivationPair& curves,
                          const MuscleParams& params, const MuscleGeometry& geometry,
                          const SimulationConfig& sim) {
  trial.validate();
  sim.validate();
  params.anterior.validate();
  params.posterior.validate();
  const auto kin = detail::prepare_kinematics(trial, geometry, sim.steps_per_cycle);
  TorqueTrace trace;
  trace.phase = uniform_phase_grid(sim.output_grid);
  trace.tau_model = detail::simulate_prepared(
      kin, detail::activation_on_half_steps(curves.anterior, sim.steps_per_cycle),
      detail::activation_on_half_steps(curves.posterior, sim.steps_per_cycle), params, sim);
  return trace;
}

Eigen::VectorXd reference_on_grid(const GaitTrial& trial, Eigen::Index grid) {
  const Eigen::VectorXd phases = uniform_phase_grid(grid);
  if (trial.phase.size() == grid && trial.phase == phases) return trial.tau_ref;
  Eigen::VectorXd out(grid);
  for (Eigen::Index k = 0; k < grid; ++k) out(k) = interpolate_linear(trial.phase, trial.tau_ref, phases(k));
  return out;
}

// ---------------------------------------------------------------------------

double GaitAngleShape::operator()(double phase) const {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // Shifted so the stance dorsiflexion peak lands near 45 % and push-off
  // plantarflexion near 70 % of the cycle.
  const double p = phase - 0.2 - phase_shift;
  const double shape = 0.10 * std::sin(two_pi * p) + 0.12 * std::sin(2.0 * two_pi * p - 1.2) +
                       0.03 * std::cos(3.0 * two_pi * p);
  return offset + scale * shape;
}

GaitTrial generate_synthetic_trial(const ActivationPair& curves, const MuscleModel& model,
                                   const SyntheticSubject& subject, double noise_sd,
                                   std::uint64_t seed, const SimulationConfig& sim,
                                   const std::string& torque_unit) {
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw DomainError("noise_sd must be >= 0");
  if (!subject.theta_profile) throw DomainError("synthetic subject has no theta profile");
  sim.validate();

  GaitTrial trial;
  trial.subject_id = subject.subject_id;
  trial.sex = subject.sex;
  trial.body_mass = subject.body_mass;
  trial.walking_speed = subject.walking_speed;
  trial.cycle_duration = subject.cycle_duration;
  trial.torque_unit = torque_unit;
  trial.phase = uniform_phase_grid(sim.output_grid);
  trial.theta.resize(sim.output_grid);
  for (Eigen::Index k = 0; k < sim.output_grid; ++k) trial.theta(k) = subject.theta_profile(trial.phase(k));
  trial.tau_ref = Eigen::VectorXd::Zero(sim.output_grid);

  const auto params = model.subject_params(trial);
  trial.tau_ref = simulate_gait(trial, curves, params, model.geometry, sim).tau_model;
  if (noise_sd > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (Eigen::Index k = 0; k < trial.tau_ref.size(); ++k) trial.tau_ref(k) += noise(rng);
  }
  return trial;
}

SubjectSplit generate_synthetic_split(const ActivationPair& curves, const MuscleModel& model,
                                      int n_train, int n_test, double noise_sd,
                                      std::uint64_t seed, const SimulationConfig& sim) {
  if (n_train < 1 || n_test < 1) throw DomainError("synthetic split needs at least one subject per side");
  static constexpr Sex kTrainSexes[] = {Sex::kFemale, Sex::kFemale, Sex::kMale, Sex::kMale};
  static constexpr Sex kTestSexes[] = {Sex::kFemale, Sex::kFemale, Sex::kMale, Sex::kFemale};

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto make = [&](const std::string& prefix, int index, Sex sex) {
    SyntheticSubject s;
    std::ostringstream id;
    id << prefix << std::setw(2) << std::setfill('0') << index + 1;
    s.subject_id = id.str();
    s.sex = sex;
    s.body_mass = (sex == Sex::kMale ? 68.0 : 55.0) + 22.0 * unit(rng);
    s.cycle_duration = 1.0 + 0.2 * unit(rng);
    s.walking_speed = 1.25;
    GaitAngleShape shape;
    shape.scale = 0.85 + 0.3 * unit(rng);
    shape.offset = -0.05 + 0.1 * unit(rng);
    shape.phase_shift = -0.03 + 0.06 * unit(rng);
    s.theta_profile = shape;
    const std::uint64_t noise_seed = rng();
    return generate_synthetic_trial(curves, model, s, noise_sd, noise_seed, sim);
  };

  SubjectSplit split;
  for (int i = 0; i < n_train; ++i) split.train.push_back(make("train", i, kTrainSexes[i % 4]));
  for (int i = 0; i < n_test; ++i) split.test.push_back(make("test", i, kTestSexes[i % 4]));
  return split;
}

// ---------------------------------------------------------------------------

FitProblem::FitProblem(std::vector<GaitTrial> trials, ActivationPair templates, MuscleModel model,
                       SimulationConfig sim, bool extended)
    : trials_(std::move(trials)),
      templates_(std::move(templates)),
      model_(std::move(model)),
      sim_(sim),
      extended_(extended) {
  if (trials_.empty()) throw DomainError("fit needs at least one training trial");
  sim_.validate();
  model_.validate();
  prepared_.reserve(trials_.size());
  for (const auto& trial : trials_) {
    trial.validate();
    PreparedTrial p;
    p.kinematics = detail::prepare_kinematics(trial, model_.geometry, sim_.steps_per_cycle);
    p.params = model_.subject_params(trial);
    p.reference = reference_on_grid(trial, sim_.output_grid);
    prepared_.push_back(std::move(p));
  }
}

Eigen::VectorXd FitProblem::lower_bounds() const {
  Eigen::VectorXd lo = Eigen::VectorXd::Zero(dimension());
  if (extended_) lo.tail(2).setConstant(kScaleLower);
  return lo;
}

Eigen::VectorXd FitProblem::upper_bounds() const {
  Eigen::VectorXd hi = Eigen::VectorXd::Ones(dimension());
  if (extended_) hi.tail(2).setConstant(kScaleUpper);
  return hi;
}

void FitProblem::check(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) {
    throw DomainError("fit vector has " + std::to_string(x.size()) + " entries, expected " +
                      std::to_string(dimension()));
  }
  const Eigen::VectorXd lo = lower_bounds();
  const Eigen::VectorXd hi = upper_bounds();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) >= lo(i) && x(i) <= hi(i))) {
      throw DomainError("fit vector entry " + std::to_string(i) + " is outside its bounds");
    }
  }
}

ActivationPair FitProblem::curves_for(const Eigen::VectorXd& x) const {
  check(x);
  return {single_node_curve(templates_.anterior, x(0)), single_node_curve(templates_.posterior, x(1))};
}

MuscleModel FitProblem::model_for(const Eigen::VectorXd& x) const {
  check(x);
  MuscleModel m = model_;
  if (extended_) {
    m.f_max_scale *= x(2);
    for (Side side : {Side::kAnterior, Side::kPosterior}) {
      m.params[side].k_ss *= x(3);
      m.params[side].k_ts_passive *= x(3);
      m.params[side].k_ts_active *= x(3);
    }
  }
  return m;
}

Eigen::VectorXd FitProblem::per_trial_rmse(const Eigen::VectorXd& x) const {
  const ActivationPair curves = curves_for(x);
  const Eigen::VectorXd act_a = detail::activation_on_half_steps(curves.anterior, sim_.steps_per_cycle);
  const Eigen::VectorXd act_p = detail::activation_on_half_steps(curves.posterior, sim_.steps_per_cycle);

  std::vector<MuscleParams> params;
  std::vector<const detail::PreparedKinematics*> kin;
  params.reserve(prepared_.size());
  for (const auto& p : prepared_) {
    params.push_back(p.params);
    kin.push_back(&p.kinematics);
    if (extended_) {
      for (Side side : {Side::kAnterior, Side::kPosterior}) {
        params.back()[side].f_max *= x(2);
        params.back()[side].k_ss *= x(3);
        params.back()[side].k_ts_passive *= x(3);
        params.back()[side].k_ts_active *= x(3);
      }
    }
  }
  std::vector<const MuscleParams*> param_ptrs;
  for (const auto& p : params) param_ptrs.push_back(&p);

  Eigen::MatrixXd torque;
  try {
    torque = detail::simulate_prepared_batch(kin, act_a, act_p, param_ptrs, sim_);
  } catch (const NumericalError& e) {
    // Find the failing trial so the error can name it.
    for (std::size_t k = 0; k < prepared_.size(); ++k) {
      try {
        detail::simulate_prepared(prepared_[k].kinematics, act_a, act_p, params[k], sim_);
      } catch (const NumericalError& inner) {
        throw NumericalError("trial '" + trials_[k].subject_id + "': " + inner.what());
      }
    }
    throw;
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(prepared_.size()));
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = rmse(torque.col(k), prepared_[k].reference);
  return out;
}

double FitProblem::operator()(const Eigen::VectorXd& x) const { return per_trial_rmse(x).mean(); }

double fit_objective(const Eigen::VectorXd& amplitudes, const FitProblem& problem) {
  return problem(amplitudes);
}

// ---------------------------------------------------------------------------

EvaluationReport make_report(std::vector<ReportRow> rows, std::string torque_unit) {
  EvaluationReport report;
  double train_sum = 0.0;
  double test_sum = 0.0;
  int train_n = 0;
  int test_n = 0;
  for (const auto& row : rows) {
    if (!std::isfinite(row.rmse) || row.rmse < 0.0) {
      throw DomainError("report row '" + row.subject_id + "' has an invalid RMSE");
    }
    if (row.split == SplitTag::kTrain) {
      train_sum += row.rmse;
      ++train_n;
    } else {
      test_sum += row.rmse;
      ++test_n;
    }
  }
  if (train_n == 0) throw DomainError("report has no training rows");
  if (test_n == 0) throw DomainError("report has no test rows");
  report.rows = std::move(rows);
  report.train_mean = train_sum / train_n;
  report.test_mean = test_sum / test_n;
  report.torque_unit = std::move(torque_unit);
  return report;
}

EvaluationReport evaluate_split(const SubjectSplit& split, const ActivationPair& curves,
                                const MuscleModel& model, const SimulationConfig& sim) {
  split.validate();
  model.validate();
  std::vector<ReportRow> rows;
  auto score = [&](const GaitTrial& trial, SplitTag tag) {
    const auto trace = simulate_gait(trial, curves, model.subject_params(trial), model.geometry, sim);
    rows.push_back({trial.subject_id, tag, trial.sex,
                    rmse(trace.tau_model, reference_on_grid(trial, sim.output_grid))});
  };
  for (const auto& t : split.train) score(t, SplitTag::kTrain);
  for (const auto& t : split.test) score(t, SplitTag::kTest);
  return make_report(std::move(rows), split.train.front().torque_unit);
}

void render_report_text(std::ostream& out, const EvaluationReport& report) {
  std::ostringstream body;
  body << std::fixed << std::setprecision(2);
  body << "RMSE between model torque and reference torque (" << report.torque_unit << ")\n\n";
  body << std::left << std::setw(8) << "Split" << std::setw(16) << "Subject" << std::right
       << std::setw(12) << "RMSE" << '\n';
  body << std::string(36, '-') << '\n';
  for (const auto& row : report.rows) {
    body << std::left << std::setw(8) << (row.split == SplitTag::kTrain ? "Train" : "Test")
         << std::setw(16) << (row.subject_id + "-" + to_char(row.sex)) << std::right
         << std::setw(12) << row.rmse << '\n';
  }
  body << std::string(36, '-') << '\n';
  body << std::left << std::setw(24) << "Train mean" << std::right << std::setw(12)
       << report.train_mean << '\n';
  body << std::left << std::setw(24) << "Test mean" << std::right << std::setw(12)
       << report.test_mean << '\n';
  body << "\nF stands for female subject, M for male subject.\n";
  out << body.str();
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
  out << "split,subject_id,sex,rmse\n";
  for (const auto& row : report.rows) {
    out << (row.split == SplitTag::kTrain ? "train" : "test") << ',' << row.subject_id << ','
        << to_char(row.sex) << ',' << format_number(row.rmse) << '\n';
  }
  out << "train,MEAN,," << format_number(report.train_mean) << '\n';
  out << "test,MEAN,," << format_number(report.test_mean) << '\n';
}

void write_trace_csv(std::ostream& out, const TorqueTrace& trace, const Eigen::VectorXd& reference) {
  if (reference.size() != trace.tau_model.size()) throw DomainError("trace/reference length mismatch");
  out << "phase,tau_model,tau_ref\n";
  for (Eigen::Index k = 0; k < trace.phase.size(); ++k) {
    out << format_number(trace.phase(k)) << ',' << format_number(trace.tau_model(k)) << ','
        << format_number(reference(k)) << '\n';
  }
}

}  // namespace wfm
