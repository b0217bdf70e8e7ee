#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "wfm/wfm_core.hpp"

namespace {

using namespace wfm;
using namespace wfm::testing;

WfmParams<> simple_params() {
  WfmParams<> p;
  p.k_ss = 1e5;
  p.k_ts_passive = 1000.0;
  p.k_ts_active = 9000.0;
  p.c_ce = 100.0;
  p.f_max = 3000.0;
  p.l_t_slack = 0.2;
  p.l_ts_rest = 0.02;
  p.l_ce_opt = 0.1;
  return p;
}

TEST(TitinStiffness, LinearInActivation) {
  const WfmParams<> p = simple_params();
  EXPECT_DOUBLE_EQ(titin_stiffness(0.0, p), 1000.0);
  EXPECT_DOUBLE_EQ(titin_stiffness(1.0, p), 10000.0);
  EXPECT_DOUBLE_EQ(titin_stiffness(0.5, p), 5500.0);
}

TEST(TitinStiffness, RejectsActivationOutsideUnitInterval) {
  const WfmParams<> p = simple_params();
  EXPECT_THROW(titin_stiffness(-0.01, p), DomainError);
  EXPECT_THROW(titin_stiffness(1.01, p), DomainError);
  EXPECT_THROW(titin_stiffness(std::nan(""), p), DomainError);
}

TEST(ForceLength, PeakAndOneWidthAway) {
  const WfmParams<> p = simple_params();
  EXPECT_DOUBLE_EQ(force_length_scale(p.l_ce_opt, p), 1.0);
  const double e1 = std::exp(-1.0);
  EXPECT_NEAR(force_length_scale(p.l_ce_opt * (1 + p.fl_width), p), e1, 1e-12);
  EXPECT_NEAR(force_length_scale(p.l_ce_opt * (1 - p.fl_width), p), e1, 1e-12);
  EXPECT_NEAR(e1, 0.367879, 1e-6);
  EXPECT_THROW(force_length_scale(0.0, p), DomainError);
}

TEST(InternalBalance, RestConfigurationCarriesNoForce) {
  const WfmParams<> p = simple_params();
  const double l_ce = 0.09;
  const auto out = solve_internal_balance(p.l_t_slack + p.l_ts_rest + l_ce, l_ce, 0.3, p);
  EXPECT_DOUBLE_EQ(out.force, 0.0);
  EXPECT_DOUBLE_EQ(out.l_ts, p.l_ts_rest);
}

TEST(InternalBalance, EqualStiffnessSplitsStretch) {
  WfmParams<> p = simple_params();
  p.k_ss = 100.0;
  p.k_ts_passive = 100.0;
  p.k_ts_active = 0.0;
  // l_ts_rest must be positive to validate; this case exercises the solver directly.
  p.l_ts_rest = 0.0;
  const double l_ce = 0.1;
  const auto out = detail::balance_unchecked(p.l_t_slack + l_ce + 0.02, l_ce, 100.0, p);
  EXPECT_NEAR(out.l_ts, 0.01, 1e-15);
  EXPECT_NEAR(out.force, 1.0, 1e-12);
  EXPECT_TRUE(out.taut);
}

TEST(InternalBalance, ShortChainIsSlack) {
  const WfmParams<> p = simple_params();
  const double l_ce = 0.1;
  const auto out = solve_internal_balance(p.l_t_slack + p.l_ts_rest + l_ce - 0.005, l_ce, 0.7, p);
  EXPECT_EQ(out.force, 0.0);
  EXPECT_FALSE(out.taut);
}

TEST(InternalBalance, DegenerateSpringsRejected) {
  WfmParams<> p = simple_params();
  p.k_ss = 0.0;
  p.k_ts_passive = 0.0;
  EXPECT_THROW(solve_internal_balance(0.4, 0.1, 0.0, p), DegenerateParametersError);
}

TEST(InternalBalance, MatchesOracleAndStaysTensionOnly) {
  Gen gen(11);
  for (int draw = 0; draw < 500; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double a = uniform(gen, 0.0, 1.0);
    const double l_ce = p.l_ce_opt * uniform(gen, 0.5, 1.5);
    const double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce + uniform(gen, -0.02, 0.02);
    const auto out = solve_internal_balance(l_mtu, l_ce, a, p);
    const auto ref = oracle_balance(l_mtu, l_ce, a, p);
    EXPECT_GE(out.force, 0.0);
    EXPECT_EQ(out.taut, ref.taut);
    EXPECT_NEAR(out.force, ref.force, 1e-9 * p.f_max);
    EXPECT_NEAR(out.l_ts, ref.l_ts, 1e-12);
    if (out.taut) {
      const double residual =
          p.k_ss * (out.l_t - p.l_t_slack) - oracle_titin(a, p) * (out.l_ts - p.l_ts_rest);
      EXPECT_LE(std::abs(residual), 1e-9 * p.f_max);
    }
  }
}

TEST(InternalBalance, ForceNonDecreasingInMtuLength) {
  Gen gen(12);
  for (int draw = 0; draw < 200; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double a = uniform(gen, 0.0, 1.0);
    const double l_ce = p.l_ce_opt * uniform(gen, 0.7, 1.3);
    double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce - 0.01;
    double last = solve_internal_balance(l_mtu, l_ce, a, p).force;
    for (int k = 0; k < 40; ++k) {
      l_mtu += 0.001;
      const double f = solve_internal_balance(l_mtu, l_ce, a, p).force;
      EXPECT_GE(f, last);
      last = f;
    }
  }
}

TEST(CeVelocity, ZeroAtForceEquality) {
  const WfmParams<> p = simple_params();
  const double l_ce = p.l_ce_opt;
  const double a = 0.2;
  // Chain tension equal to a * f_max at the optimum.
  const double k_series = detail::series_stiffness(oracle_titin(a, p), p);
  const double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce + a * p.f_max / k_series;
  EXPECT_NEAR(ce_velocity(l_mtu, l_ce, a, p), 0.0, 1e-12);
}

TEST(CeVelocity, OneNewtonThroughDamper) {
  WfmParams<> p = simple_params();
  p.c_ce = 100.0;
  const double l_ce = 0.1;
  const double k_series = detail::series_stiffness(oracle_titin(0.0, p), p);
  const double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce + 1.0 / k_series;
  EXPECT_NEAR(ce_velocity(l_mtu, l_ce, 0.0, p), 0.01, 1e-12);
}

TEST(CeVelocity, SlackActiveMuscleShortens) {
  const WfmParams<> p = simple_params();
  EXPECT_LT(ce_velocity(p.l_t_slack + p.l_ts_rest + 0.09, 0.1, 0.5, p), 0.0);
}

TEST(CeVelocity, NonPositiveDampingRejected) {
  WfmParams<> p = simple_params();
  p.c_ce = 0.0;
  EXPECT_THROW(ce_velocity(0.4, 0.1, 0.1, p), DegenerateParametersError);
}

TEST(CeVelocity, MatchesOracle) {
  Gen gen(13);
  for (int draw = 0; draw < 500; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double a = uniform(gen, 0.0, 1.0);
    const double l_ce = p.l_ce_opt * uniform(gen, 0.5, 1.5);
    const double l_mtu = p.l_t_slack + p.l_ts_rest + l_ce + uniform(gen, -0.02, 0.02);
    const double v = ce_velocity(l_mtu, l_ce, a, p);
    EXPECT_NEAR(v, oracle_velocity(l_mtu, l_ce, a, p), 1e-9 * p.f_max / p.c_ce);
  }
}

TEST(StepMuscle, EquilibriumIsFixedPoint) {
  Gen gen(14);
  for (int draw = 0; draw < 50; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double a = uniform(gen, 0.05, 1.0);
    const double l_mtu = rest_mtu_length(p) * uniform(gen, 1.0, 1.05);
    const double l_ce = equilibrium_ce_length(l_mtu, a, p);
    const StageInputs<> hold{{l_mtu, l_mtu, l_mtu}, {a, a, a}};
    const auto next = step_muscle(MuscleState<>{l_ce, 0.0}, hold, 1e-3, p);
    EXPECT_LE(std::abs(next.l_ce - l_ce), 1e-12 * l_ce);
  }
}

TEST(StepMuscle, RejectsBadStepSize) {
  const WfmParams<> p = simple_params();
  const StageInputs<> in{{0.4, 0.4, 0.4}, {0.1, 0.1, 0.1}};
  EXPECT_THROW(step_muscle(MuscleState<>{0.1, 0.0}, in, 0.0, p), DomainError);
  EXPECT_THROW(step_muscle(MuscleState<>{0.1, 0.0}, in, -1e-3, p), DomainError);
  EXPECT_THROW(step_muscle(MuscleState<>{0.1, 0.0}, in, std::nan(""), p), DomainError);
}

TEST(StepMuscle, NonFiniteStateNamesTime) {
  const WfmParams<> p = simple_params();
  const StageInputs<> in{{0.4, 0.4, 0.4}, {0.1, 0.1, 0.1}};
  try {
    step_muscle(MuscleState<>{std::nan(""), 0.25}, in, 1e-3, p);
    FAIL() << "expected an integration error";
  } catch (const IntegrationError& e) {
    EXPECT_DOUBLE_EQ(e.time(), 0.25);
  }
}

TEST(StepMuscle, FunctionInputsMatchSampledInputs) {
  Gen gen(15);
  const WfmParams<> p = random_params(gen);
  const SmoothSchedule s = random_schedule(gen, p);
  const MuscleState<> start{p.l_ce_opt, 0.3};
  const double dt = 2e-3;
  const StageInputs<> in{{s.length(0.3), s.length(0.3 + dt / 2), s.length(0.3 + dt)},
                         {s.activation(0.3), s.activation(0.3 + dt / 2), s.activation(0.3 + dt)}};
  const auto a = step_muscle(start, in, dt, p);
  const auto b = step_muscle(
      start, [&](double t) { return s.length(t); }, [&](double t) { return s.activation(t); }, dt, p);
  EXPECT_EQ(a.l_ce, b.l_ce);
  EXPECT_DOUBLE_EQ(b.t, 0.3 + dt);
}

Eigen::VectorXd integrate(const SmoothSchedule& s, const WfmParams<>& p, int samples, int per_sample) {
  constexpr double kHorizon = 0.5;
  MuscleState<> state{equilibrium_ce_length(s.length(0.0), s.activation(0.0), p), 0.0};
  const int steps = samples * per_sample;
  const double dt = kHorizon / steps;
  Eigen::VectorXd trace(samples + 1);
  trace(0) = state.l_ce;
  for (int i = 0; i < steps; ++i) {
    state.t = i * dt;
    state = step_muscle(
        state, [&](double t) { return s.length(t); }, [&](double t) { return s.activation(t); }, dt, p);
    if ((i + 1) % per_sample == 0) trace((i + 1) / per_sample) = state.l_ce;
  }
  return trace;
}

TEST(StepMuscle, FourthOrderOnSmoothSchedules) {
  Gen gen(16);
  for (int trial = 0; trial < 3; ++trial) {
    const WfmParams<> p = random_params(gen);
    const SmoothSchedule s = random_schedule(gen, p);
    const Eigen::VectorXd coarse = integrate(s, p, 200, 1);
    const Eigen::VectorXd fine = integrate(s, p, 200, 2);
    const Eigen::VectorXd reference = integrate(s, p, 200, 64);
    const double ratio =
        (coarse - reference).cwiseAbs().maxCoeff() / (fine - reference).cwiseAbs().maxCoeff();
    EXPECT_GE(ratio, 8.0);
    EXPECT_LE(ratio, 32.0);
  }
}

TEST(Equilibrium, RestLengthAtZeroActivation) {
  const WfmParams<> p = simple_params();
  EXPECT_NEAR(equilibrium_ce_length(rest_mtu_length(p), 0.0, p), p.l_ce_opt, 1e-9);
}

TEST(Equilibrium, PassiveStretchTakenUpByCe) {
  const WfmParams<> p = simple_params();
  // Without activation the CE lengthens until the chain is back at rest.
  const double delta = 0.01;
  EXPECT_NEAR(equilibrium_ce_length(rest_mtu_length(p) + delta, 0.0, p), p.l_ce_opt + delta, 1e-8);
}

TEST(Equilibrium, MatchesBisectionOracle) {
  Gen gen(17);
  int checked = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double l_mtu = rest_mtu_length(p) * uniform(gen, 0.97, 1.08);
    const double a = draw % 4 == 0 ? 0.0 : uniform(gen, 0.0, 1.0);
    const double target = oracle_equilibrium(l_mtu, a, p);
    if (std::isnan(target)) {
      EXPECT_THROW(equilibrium_ce_length(l_mtu, a, p), NoEquilibriumError);
      continue;
    }
    ++checked;
    EXPECT_NEAR(equilibrium_ce_length(l_mtu, a, p), target, 1e-8);
  }
  EXPECT_GE(checked, 90);
}

TEST(Equilibrium, PassiveRelaxationConverges) {
  Gen gen(18);
  for (int draw = 0; draw < 20; ++draw) {
    const WfmParams<> p = random_params(gen);
    const double l_mtu = rest_mtu_length(p) * uniform(gen, 1.0, 1.05);
    const StageInputs<> hold{{l_mtu, l_mtu, l_mtu}, {0.0, 0.0, 0.0}};
    MuscleState<> s{p.l_ce_opt * 0.8, 0.0};
    double change = 1.0;
    for (int cycle = 0; cycle < 200 && change > 1e-12; ++cycle) {
      const double before = s.l_ce;
      for (int i = 0; i < 1000; ++i) s = step_muscle(s, hold, 1e-3, p);
      change = std::abs(s.l_ce - before);
    }
    EXPECT_LE(change, 1e-12);
    EXPECT_NEAR(s.l_ce, equilibrium_ce_length(l_mtu, 0.0, p), 1e-6);
  }
}

TEST(FMax, FiveBodyWeights) {
  EXPECT_NEAR(f_max_from_mass(70.0), 3432.33, 0.01);
  EXPECT_NEAR(f_max_from_mass(1.0), 49.03, 0.01);
  EXPECT_DOUBLE_EQ(f_max_from_mass(70.0), 5 * 70 * 9.80665);
  EXPECT_THROW(f_max_from_mass(0.0), DomainError);
  EXPECT_THROW(f_max_from_mass(-3.0), DomainError);
}

TEST(Params, ValidateNamesField) {
  WfmParams<> p = simple_params();
  p.c_ce = -1.0;
  try {
    p.validate();
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("c_ce"), std::string::npos);
  }
}

TEST(Params, FloatScalarInstantiates) {
  WfmParams<float> p;
  p.k_ss = 1e5f;
  p.k_ts_passive = 1e3f;
  p.k_ts_active = 9e3f;
  p.c_ce = 100.f;
  p.f_max = 3000.f;
  p.l_t_slack = 0.2f;
  p.l_ts_rest = 0.02f;
  p.l_ce_opt = 0.1f;
  EXPECT_FLOAT_EQ(titin_stiffness(0.5f, p), 5500.f);
  EXPECT_FLOAT_EQ(force_length_scale(0.1f, p), 1.f);
}

}  // namespace
