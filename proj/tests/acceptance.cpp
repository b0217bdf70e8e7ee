// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "wfm/cli_app.hpp"
#include "wfm/pipeline.hpp"
#include "wfm/pso.hpp"

namespace {

using namespace wfm;
using namespace wfm::testing;
namespace fs = std::filesystem;

struct Outcome {
  bool ok{true};
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

Outcome table_arithmetic() {
  Outcome out;
  const std::vector<double> train{118.95, 167.23, 213.85, 119.08};
  const std::vector<double> test{102.16, 110.88, 163.59, 139.67};
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < train.size(); ++i) {
    rows.push_back({"S" + std::to_string(i + 1), SplitTag::kTrain, Sex::kFemale, train[i]});
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    rows.push_back({"S" + std::to_string(i + 5), SplitTag::kTest, Sex::kMale, test[i]});
  }
  const EvaluationReport report = make_report(rows, "unspecified");
  out.detail = fmt("train_mean %.4f, test_mean %.4f", report.train_mean, report.test_mean);
  out.require(std::abs(report.train_mean - 154.78) <= 0.01, "train mean off: " + out.detail);
  out.require(std::abs(report.test_mean - 129.07) <= 0.01, "test mean off: " + out.detail);
  return out;
}

Outcome activation_round_trip() {
  Outcome out;
  const MuscleModel model = default_model();
  const ActivationPair truth = default_activation_templates(0.05, 0.1);
  const SimulationConfig sim;
  constexpr double kSigma = 0.5;
  std::string summary;
  for (double noise : {0.0, kSigma}) {
    const SubjectSplit split = generate_synthetic_split(truth, model, 4, 4, noise, kDefaultSeed, sim);
    FitProblem problem(split.train, truth, model, sim);
    PsoConfig cfg;
    cfg.lower = problem.lower_bounds();
    cfg.upper = problem.upper_bounds();
    const OptimizationResult result = optimize([&](const Eigen::VectorXd& x) { return problem(x); }, cfg);
    const double a = result.best_position(0);
    const double p = result.best_position(1);
    summary += fmt("noise %.2f: (%.5f, %.5f)", noise, a, p) + fmt(" objective %.3g; ", result.best_value);
    if (noise == 0.0) {
      out.require(std::abs(a - 0.05) <= 0.05 * 0.05, "anterior amplitude not recovered: " + summary);
      out.require(std::abs(p - 0.1) <= 0.05 * 0.1, "posterior amplitude not recovered: " + summary);
      out.require(result.best_value <= 1e-4, "noise-free objective too large: " + summary);
    } else {
      out.require(result.best_value >= 0.8 * kSigma && result.best_value <= 1.2 * kSigma,
                  "noisy objective outside [0.8, 1.2] sigma: " + summary);
    }
  }
  if (out.ok) out.detail = summary;
  return out;
}

Outcome f_max_rule() {
  Outcome out;
  const double f = f_max_from_mass(70.0);
  out.detail = fmt("f_max_from_mass(70) = %.4f N", f);
  out.require(std::abs(f - 3432.33) <= 0.01, out.detail);
  return out;
}

Outcome mechanics_oracles() {
  Outcome out;
  Gen gen(4101);
  double worst_residual = 0.0;
  double worst_limit = 0.0;
  double worst_arm = 0.0;
  int draws_with_equilibrium = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double rest = rest_mtu_length(p);

    // Force balance on a taut configuration.
    const double a = uniform(gen, 0.0, 1.0);
    const double l_ce = p.l_ce_opt * uniform(gen, 0.6, 1.2);
    const double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce + uniform(gen, 1e-4, 0.03);
    const MuscleOutputs<> m = solve_internal_balance(l_mtu, l_ce, a, p);
    const double k_ts = oracle_titin(a, p);
    const double residual = std::abs(p.k_ss * (m.l_t - p.l_t_slack) - k_ts * (m.l_ts - p.l_ts_rest));
    worst_residual = std::max(worst_residual, residual / p.f_max);
    out.require(m.taut && residual <= 1e-9 * p.f_max,
                fmt("draw %.0f: force-balance residual %.3g N", draw, residual));

    // Long-time limit of the integrator against the bisection oracle.
    const double l_hold = rest * uniform(gen, 0.97, 1.08);
    const double a_hold = draw % 5 == 0 ? 0.0 : uniform(gen, 0.0, 1.0);
    const double target = oracle_equilibrium(l_hold, a_hold, p);
    if (std::isnan(target)) continue;
    ++draws_with_equilibrium;
    MuscleState<> s{0.5 * target, 0.0};
    const StageInputs<> hold{{l_hold, l_hold, l_hold}, {a_hold, a_hold, a_hold}};
    constexpr double kDt = 1e-3;
    for (int block = 0; block < 200; ++block) {
      const double before = s.l_ce;
      for (int i = 0; i < 1000; ++i) s = step_muscle(s, hold, kDt, p);
      if (std::abs(s.l_ce - before) < 1e-12) break;
    }
    const double limit_error = std::abs(s.l_ce - target);
    const double solver_error = std::abs(equilibrium_ce_length(l_hold, a_hold, p) - target);
    worst_limit = std::max({worst_limit, limit_error, solver_error});
    out.require(limit_error <= 1e-6, fmt("draw %.0f: step_muscle limit off by %.3g m", draw, limit_error));
    out.require(solver_error <= 1e-6, fmt("draw %.0f: equilibrium_ce_length off by %.3g m", draw, solver_error));

    // Moment arm against a central difference of the muscle length.
    const AttachmentGeometry<> g{uniform(gen, 0.05, 0.4), uniform(gen, 0.03, 0.15),
                                 uniform(gen, 70.0, 110.0) * std::numbers::pi / 180.0,
                                 draw % 2 == 0 ? Side::kAnterior : Side::kPosterior};
    constexpr double kH = 1e-6;
    for (int k = -60; k <= 60; ++k) {
      const double theta = k * 0.5 * std::numbers::pi / 180.0;
      const double fd = std::abs(muscle_length(theta + kH, g) - muscle_length(theta - kH, g)) / (2 * kH);
      const double err = std::abs(moment_arm(theta, g) - fd);
      worst_arm = std::max(worst_arm, err);
      out.require(err <= 1e-6, fmt("draw %.0f: moment arm off by %.3g m at %.1f deg", draw, err, k * 0.5));
    }
  }
  out.require(draws_with_equilibrium >= 90, fmt("only %.0f draws had an equilibrium", draws_with_equilibrium));
  if (out.ok) {
    out.detail = fmt("residual/f_max %.2g, limit error %.2g m, arm error %.2g m", worst_residual,
                     worst_limit, worst_arm);
  }
  return out;
}

// CE length at `samples` + 1 evenly spaced times over [0, horizon].
Eigen::VectorXd integrate_schedule(const SmoothSchedule& s, const WfmParams<>& p, double horizon,
                                   int samples, int steps_per_sample) {
  MuscleState<> state{equilibrium_ce_length(s.length(0.0), s.activation(0.0), p), 0.0};
  const int steps = samples * steps_per_sample;
  const double dt = horizon / steps;
  auto length = [&](double t) { return s.length(t); };
  auto activation = [&](double t) { return s.activation(t); };
  Eigen::VectorXd trace(samples + 1);
  trace(0) = state.l_ce;
  for (int i = 0; i < steps; ++i) {
    state.t = i * dt;
    state = step_muscle(state, length, activation, dt, p);
    if ((i + 1) % steps_per_sample == 0) trace((i + 1) / steps_per_sample) = state.l_ce;
  }
  return trace;
}

Outcome integrator_order() {
  Outcome out;
  Gen gen(5202);
  std::string ratios;
  for (int trial = 0; trial < 3; ++trial) {
    const WfmParams<> p = random_params(gen);
    const SmoothSchedule s = random_schedule(gen, p);
    constexpr double kHorizon = 0.5;
    constexpr int kSteps = 200;
    const Eigen::VectorXd coarse = integrate_schedule(s, p, kHorizon, kSteps, 1);
    const Eigen::VectorXd fine = integrate_schedule(s, p, kHorizon, kSteps, 2);
    const Eigen::VectorXd reference = integrate_schedule(s, p, kHorizon, kSteps, 64);
    const double ratio = (coarse - reference).cwiseAbs().maxCoeff() / (fine - reference).cwiseAbs().maxCoeff();
    ratios += fmt("%.2f ", ratio);
    out.require(ratio >= 8.0 && ratio <= 32.0, "Richardson ratio out of [8, 32]: " + ratios);
  }

  const MuscleModel model = default_model();
  const ActivationPair curves = default_activation_templates(0.05, 0.1);
  SimulationConfig sim;
  const SyntheticSubject subject{"acc01", Sex::kMale, 72.0, 1.1, 1.25, GaitAngleShape{}};
  const GaitTrial trial = generate_synthetic_trial(curves, model, subject, 0.0, kDefaultSeed, sim);
  const MuscleParams params = model.subject_params(trial);
  const TorqueTrace base = simulate_gait(trial, curves, params, model.geometry, sim);
  sim.steps_per_cycle *= 2;
  const TorqueTrace doubled = simulate_gait(trial, curves, params, model.geometry, sim);
  const double shift = (base.tau_model - doubled.tau_model).cwiseAbs().maxCoeff();
  const double scale = base.tau_model.cwiseAbs().maxCoeff();
  out.require(shift < 1e-6 * scale, fmt("trace shift %.3g exceeds 1e-6 of max-abs %.3g", shift, scale));
  if (out.ok) out.detail = "ratios " + ratios + fmt("; trace shift/max-abs %.2g", shift / scale);
  return out;
}

Outcome pso_sanity() {
  Outcome out;
  PsoConfig cfg;
  cfg.swarm_size = 30;
  cfg.max_iterations = 200;
  cfg.lower = Eigen::VectorXd::Constant(3, -5.0);
  cfg.upper = Eigen::VectorXd::Constant(3, 5.0);
  auto sphere = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  const OptimizationResult first = optimize(sphere, cfg);
  const OptimizationResult second = optimize(sphere, cfg);
  out.detail = fmt("best %.3g after %.0f iterations", first.best_value, first.iterations_run);
  out.require(first.best_value <= 1e-6, "sphere not minimised: " + out.detail);
  out.require(first.iterations_run <= 200, "too many iterations");
  out.require(first.history == second.history && first.best_position == second.best_position,
              "two runs with the same seed differ");
  for (std::size_t i = 1; i < first.history.size(); ++i) {
    out.require(first.history[i] <= first.history[i - 1], "history increases");
  }
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"wfm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome cli_determinism() {
  Outcome out;
  TempDir tmp("acceptance");
  const fs::path data = tmp.path() / "data";
  out.require(cli({"-o", data.string(), "gen-synthetic", "--noise", "0.3"}) == 0, "gen-synthetic failed");
  if (!out.ok) return out;

  // Same dataset, a shorter swarm run so the check stays quick.
  nlohmann::json config = nlohmann::json::parse(slurp(data / "synthetic_config.json"));
  config["pso"]["max_iterations"] = 25;
  std::ofstream(data / "short.json") << config.dump(2);

  const fs::path run1 = tmp.path() / "run1";
  const fs::path run2 = tmp.path() / "run2";
  for (const auto& dir : {run1, run2}) {
    out.require(cli({"-c", (data / "short.json").string(), "-o", dir.string(), "optimize"}) == 0,
                "optimize failed");
  }
  if (!out.ok) return out;
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(run1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), run1);
    out.require(fs::exists(run2 / rel), "missing in second run: " + rel.string());
    out.require(slurp(entry.path()) == slurp(run2 / rel), "outputs differ: " + rel.string());
    ++compared;
  }
  for (const auto& entry : fs::recursive_directory_iterator(run2)) {
    out.require(fs::exists(run1 / fs::relative(entry.path(), run2)), "extra file in second run");
  }
  out.require(compared >= 4, "expected at least four output files");
  if (out.ok) out.detail = std::to_string(compared) + " files byte-identical";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0: no limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion numbers restrict the run.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "table-1 arithmetic", 1.0, table_arithmetic},
      {2, "activation round trip", 60.0, activation_round_trip},
      {3, "f_max rule", 1.0, f_max_rule},
      {4, "mechanics oracle suite", 10.0, mechanics_oracles},
      {5, "integrator order", 10.0, integrator_order},
      {6, "pso sanity", 5.0, pso_sanity},
      {7, "optimize determinism", 0.0, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.ok && c.time_limit_s > 0.0 && elapsed > c.time_limit_s) {
      outcome = {false, fmt("took %.2f s, limit %.0f s", elapsed, c.time_limit_s)};
    }
    if (!outcome.ok) ++failures;
    std::cout << (outcome.ok ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " ("
              << fmt("%.2f s", elapsed) << "): " << outcome.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : "acceptance failures: " + std::to_string(failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
