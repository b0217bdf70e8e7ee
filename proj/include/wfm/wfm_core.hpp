#pragma once

// Lumped winding-filament muscle: a tension-only tendon spring (k_ss) in
// series with a titin spring (k_ts, stiffening with activation) that is in
// series with a contractile element in parallel with a damper (c_ce).
//
//   origin --[ tendon k_ss ]--[ titin k_ts(a) ]--[ CE || c_ce ]-- insertion
//
// The contractile-element length l_ce is the only integrated state. Given
// l_ce and the imposed muscle-tendon length, the two springs are solved
// statically; the damper then sets dl_ce/dt from the imbalance between the
// chain tension and the active CE force.

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "wfm/errors.hpp"

namespace wfm {

inline constexpr double kStandardGravity = 9.80665;

template <typename Scalar = double>
struct WfmParams {
  Scalar k_ss{};          // tendon stiffness [N/m]
  Scalar k_ts_passive{};  // titin stiffness at zero activation [N/m]
  Scalar k_ts_active{};   // titin stiffness added at full activation [N/m]
  Scalar c_ce{};          // CE damping [N s/m]
  Scalar f_max{};         // maximum isometric CE force [N]
  Scalar l_t_slack{};     // [m]
  Scalar l_ts_rest{};     // [m]
  Scalar l_ce_opt{};      // [m]
  Scalar fl_width{0.45};  // force-length Gaussian width, fraction of l_ce_opt

  /// Throws DomainError naming the first field that breaks an invariant.
  void validate() const {
    auto require = [](bool ok, const char* field, const char* rule) {
      if (!ok) throw DomainError(std::string("WfmParams.") + field + " must be " + rule);
    };
    require(std::isfinite(k_ss) && k_ss >= 0, "k_ss", ">= 0");
    require(std::isfinite(k_ts_passive) && k_ts_passive >= 0, "k_ts_passive", ">= 0");
    require(std::isfinite(k_ts_active) && k_ts_active >= 0, "k_ts_active", ">= 0");
    require(k_ts_passive + k_ts_active > 0, "k_ts_passive + k_ts_active", "> 0");
    require(std::isfinite(c_ce) && c_ce > 0, "c_ce", "> 0");
    require(std::isfinite(f_max) && f_max > 0, "f_max", "> 0");
    require(std::isfinite(l_t_slack) && l_t_slack > 0, "l_t_slack", "> 0");
    require(std::isfinite(l_ts_rest) && l_ts_rest > 0, "l_ts_rest", "> 0");
    require(std::isfinite(l_ce_opt) && l_ce_opt > 0, "l_ce_opt", "> 0");
    require(std::isfinite(fl_width) && fl_width > 0, "fl_width", "> 0");
  }
};

template <typename Scalar = double>
struct MuscleState {
  Scalar l_ce{};
  Scalar t{};
};

template <typename Scalar = double>
struct MuscleOutputs {
  Scalar l_ts{};
  Scalar l_t{};
  Scalar force{};
  bool taut{false};
};

/// Muscle-tendon length and activation sampled at t, t + dt/2 and t + dt,
/// the three abscissae a classical Runge-Kutta step visits.
template <typename Scalar = double>
struct StageInputs {
  std::array<Scalar, 3> l_mtu{};
  std::array<Scalar, 3> activation{};
};

namespace detail {

[[noreturn, gnu::cold, gnu::noinline]] inline void throw_bad_activation(double a) {
  throw DomainError("activation must lie in [0, 1], got " + std::to_string(a));
}

[[noreturn, gnu::cold, gnu::noinline]] inline void throw_left_range(double when) {
  throw IntegrationError("CE length left the valid range", when);
}

template <typename Scalar>
inline void require_activation(Scalar a) {
  if (!(a >= Scalar(0) && a <= Scalar(1))) throw_bad_activation(double(a));
}

template <typename Scalar>
Scalar titin_stiffness_unchecked(Scalar a, const WfmParams<Scalar>& p) {
  return p.k_ts_passive + a * p.k_ts_active;
}

// Chain tension when taut: the two springs in series act as one of stiffness
// k_ss k_ts / (k_ss + k_ts) stretched by (l_mtu - l_ce - l_t_slack - l_ts_rest).
template <typename Scalar>
inline Scalar series_stiffness(Scalar k_ts, const WfmParams<Scalar>& p) {
  return p.k_ss * k_ts / (p.k_ss + k_ts);
}

template <typename Scalar>
inline Scalar chain_force(Scalar l_mtu, Scalar l_ce, Scalar k_series, const WfmParams<Scalar>& p) {
  const Scalar excess = l_mtu - l_ce - p.l_t_slack - p.l_ts_rest;
  return excess > Scalar(0) ? k_series * excess : Scalar(0);
}

template <typename Scalar>
inline Scalar force_length_unchecked(Scalar l_ce, Scalar inv_width, const WfmParams<Scalar>& p) {
  const Scalar z = (l_ce - p.l_ce_opt) * inv_width;
  return std::exp(-z * z);
}

template <typename Scalar>
inline Scalar force_length_unchecked(Scalar l_ce, const WfmParams<Scalar>& p) {
  return force_length_unchecked(l_ce, Scalar(1) / (p.fl_width * p.l_ce_opt), p);
}

template <typename Scalar>
MuscleOutputs<Scalar> balance_unchecked(Scalar l_mtu, Scalar l_ce, Scalar k_ts,
                                        const WfmParams<Scalar>& p) {
  MuscleOutputs<Scalar> out;
  out.force = chain_force(l_mtu, l_ce, series_stiffness(k_ts, p), p);
  out.taut = out.force > Scalar(0);
  if (out.taut) {
    const Scalar stretch = l_mtu - l_ce - p.l_t_slack;
    out.l_ts = (p.k_ss * stretch + k_ts * p.l_ts_rest) / (p.k_ss + k_ts);
  } else {
    out.force = Scalar(0);
    out.l_ts = p.l_ts_rest;
  }
  out.l_t = l_mtu - l_ce - out.l_ts;
  return out;
}

// Everything in dl_ce/dt that does not depend on l_ce, for one stage input.
template <typename Scalar>
struct RateCoefficients {
  Scalar l_mtu;
  Scalar k_series;
  Scalar active;  // a * f_max
  Scalar inv_damping;
  Scalar inv_width;

  RateCoefficients(Scalar l_mtu_, Scalar k_series_, Scalar active_, Scalar inv_damping_,
                   Scalar inv_width_)
      : l_mtu(l_mtu_), k_series(k_series_), active(active_), inv_damping(inv_damping_), inv_width(inv_width_) {}

  RateCoefficients(Scalar l_mtu_, Scalar a, const WfmParams<Scalar>& p, Scalar inv_damping_,
                   Scalar inv_width_)
      : RateCoefficients(l_mtu_, series_stiffness(titin_stiffness_unchecked(a, p), p), a * p.f_max,
                         inv_damping_, inv_width_) {}

  Scalar operator()(Scalar l_ce, const WfmParams<Scalar>& p) const {
    const Scalar chain = chain_force(l_mtu, l_ce, k_series, p);
    // Exactly zero at a = 0; skip the exponential there.
    const Scalar ce = active > Scalar(0) ? active * force_length_unchecked(l_ce, inv_width, p) : Scalar(0);
    return (chain - ce) * inv_damping;
  }

  // d(rate)/d(l_ce), given the rate already evaluated at l_ce.
  Scalar slope(Scalar l_ce, Scalar rate, const WfmParams<Scalar>& p) const {
    const Scalar chain = chain_force(l_mtu, l_ce, k_series, p);
    const Scalar active_force = chain - rate * p.c_ce;
    const Scalar x = (l_ce - p.l_ce_opt) * inv_width;
    const Scalar taut = chain > Scalar(0) ? -k_series : Scalar(0);
    return (taut + active_force * Scalar(2) * x * inv_width) * inv_damping;
  }
};

template <typename Scalar>
inline Scalar ce_velocity_unchecked(Scalar l_mtu, Scalar l_ce, Scalar a, const WfmParams<Scalar>& p) {
  const RateCoefficients<Scalar> rate(l_mtu, a, p, Scalar(1) / p.c_ce,
                                      Scalar(1) / (p.fl_width * p.l_ce_opt));
  return rate(l_ce, p);
}

// Classical RK4 with the coefficients at the step start, midpoint and end.
// `k1` optionally receives the rate at the start.
template <typename Scalar>
MuscleState<Scalar> rk4_step(const MuscleState<Scalar>& s, const RateCoefficients<Scalar>& start,
                             const RateCoefficients<Scalar>& mid, const RateCoefficients<Scalar>& end,
                             Scalar dt, const WfmParams<Scalar>& p, Scalar* k1_out = nullptr) {
  auto rate = [&](const RateCoefficients<Scalar>& c, Scalar l_ce, Scalar when) {
    if (!(l_ce > Scalar(0)) || !std::isfinite(l_ce)) throw_left_range(double(when));
    return c(l_ce, p);
  };
  const Scalar half = dt / Scalar(2);
  const Scalar k1 = rate(start, s.l_ce, s.t);
  const Scalar k2 = rate(mid, s.l_ce + half * k1, s.t + half);
  const Scalar k3 = rate(mid, s.l_ce + half * k2, s.t + half);
  const Scalar k4 = rate(end, s.l_ce + dt * k3, s.t + dt);
  if (k1_out != nullptr) *k1_out = k1;

  MuscleState<Scalar> next;
  next.l_ce = s.l_ce + dt / Scalar(6) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
  next.t = s.t + dt;
  if (!std::isfinite(next.l_ce) || !(next.l_ce > Scalar(0))) throw_left_range(double(next.t));
  return next;
}

}  // namespace detail

/// Titin stiffness rises linearly from k_ts_passive (a = 0) to
/// k_ts_passive + k_ts_active (a = 1).
template <typename Scalar>
Scalar titin_stiffness(Scalar a, const WfmParams<Scalar>& p) {
  detail::require_activation(a);
  return detail::titin_stiffness_unchecked(a, p);
}

/// Gaussian force-length factor, 1 at l_ce_opt.
template <typename Scalar>
Scalar force_length_scale(Scalar l_ce, const WfmParams<Scalar>& p) {
  if (!(l_ce > Scalar(0))) throw DomainError("CE length must be positive");
  return detail::force_length_unchecked(l_ce, p);
}

/// Static force balance of tendon and titin for a given CE length.
///
/// Both springs carry the same tension when taut. If the chain would have
/// to push (tension < 0) it is reported slack instead: zero force, titin at
/// its rest length and the remaining length taken up by the tendon.
template <typename Scalar>
MuscleOutputs<Scalar> solve_internal_balance(Scalar l_mtu, Scalar l_ce, Scalar a,
                                             const WfmParams<Scalar>& p) {
  if (!(l_mtu > Scalar(0))) throw DomainError("muscle-tendon length must be positive");
  if (!(l_ce > Scalar(0))) throw DomainError("CE length must be positive");
  detail::require_activation(a);
  const Scalar k_ts = detail::titin_stiffness_unchecked(a, p);
  if (!(p.k_ss + k_ts > Scalar(0))) {
    throw DegenerateParametersError("k_ss + k_ts(a) must be positive");
  }
  return detail::balance_unchecked(l_mtu, l_ce, k_ts, p);
}

/// dl_ce/dt, positive when the CE lengthens.
template <typename Scalar>
Scalar ce_velocity(Scalar l_mtu, Scalar l_ce, Scalar a, const WfmParams<Scalar>& p) {
  if (!(p.c_ce > Scalar(0))) throw DegenerateParametersError("c_ce must be positive");
  solve_internal_balance(l_mtu, l_ce, a, p);
  return detail::ce_velocity_unchecked(l_mtu, l_ce, a, p);
}

/// One classical fourth-order Runge-Kutta step with inputs pre-sampled at
/// the stage times. This is the form the gait simulator drives in its inner
/// loop.
template <typename Scalar>
MuscleState<Scalar> step_muscle(const MuscleState<Scalar>& s, const StageInputs<Scalar>& in,
                                 Scalar dt, const WfmParams<Scalar>& p) {
  if (!(dt > Scalar(0)) || !std::isfinite(dt)) {
    throw DomainError("step size must be positive and finite");
  }
  if (!(p.c_ce > Scalar(0))) throw DegenerateParametersError("c_ce must be positive");
  for (int i = 0; i < 3; ++i) {
    detail::require_activation(in.activation[i]);
    if (!(in.l_mtu[i] > Scalar(0))) {
      throw IntegrationError("non-positive muscle-tendon length", double(s.t));
    }
  }
  if (!(p.k_ss + detail::titin_stiffness_unchecked(Scalar(0), p) > Scalar(0))) {
    throw DegenerateParametersError("k_ss + k_ts(0) must be positive");
  }

  const Scalar inv_damping = Scalar(1) / p.c_ce;
  const Scalar inv_width = Scalar(1) / (p.fl_width * p.l_ce_opt);
  return detail::rk4_step(s, detail::RateCoefficients<Scalar>(in.l_mtu[0], in.activation[0], p, inv_damping, inv_width),
                          detail::RateCoefficients<Scalar>(in.l_mtu[1], in.activation[1], p, inv_damping, inv_width),
                          detail::RateCoefficients<Scalar>(in.l_mtu[2], in.activation[2], p, inv_damping, inv_width),
                          dt, p);
}

/// Same step with the inputs given as functions of time.
template <typename Scalar, typename LengthFn, typename ActivationFn>
MuscleState<Scalar> step_muscle(const MuscleState<Scalar>& s, LengthFn&& l_mtu_of_t,
                                ActivationFn&& a_of_t, Scalar dt, const WfmParams<Scalar>& p) {
  StageInputs<Scalar> in;
  const std::array<Scalar, 3> times{s.t, s.t + dt / Scalar(2), s.t + dt};
  for (int i = 0; i < 3; ++i) {
    in.l_mtu[i] = l_mtu_of_t(times[i]);
    in.activation[i] = a_of_t(times[i]);
  }
  return step_muscle(s, in, dt, p);
}

/// CE length at which the damper is at rest for fixed l_mtu and activation.
///
/// Scans upward from a short CE for the first place the velocity stops being
/// positive, then bisects. The crossing found is a stable rest point of the
/// CE flow, the one a simulation started below it settles into. At zero
/// activation this is the length where the chain just goes slack.
template <typename Scalar>
Scalar equilibrium_ce_length(Scalar l_mtu, Scalar a, const WfmParams<Scalar>& p) {
  if (!(l_mtu > Scalar(0))) throw DomainError("muscle-tendon length must be positive");
  detail::require_activation(a);
  p.validate();
  if (!(p.k_ss + detail::titin_stiffness_unchecked(a, p) > Scalar(0))) {
    throw DegenerateParametersError("k_ss + k_ts(a) must be positive");
  }
  auto v = [&](Scalar l_ce) { return detail::ce_velocity_unchecked(l_mtu, l_ce, a, p); };

  constexpr int kScan = 400;
  Scalar lo = l_mtu / Scalar(kScan);
  if (!(v(lo) > Scalar(0))) {
    throw NoEquilibriumError("no CE equilibrium: CE velocity is not positive anywhere in (0, l_mtu]");
  }
  Scalar hi = lo;
  bool bracketed = false;
  for (int k = 2; k <= kScan; ++k) {
    hi = (k == kScan) ? l_mtu : l_mtu * Scalar(k) / Scalar(kScan);
    if (!(v(hi) > Scalar(0))) {
      bracketed = true;
      break;
    }
    lo = hi;
  }
  if (!bracketed) {
    throw NoEquilibriumError("no CE equilibrium: CE velocity stays positive on (0, l_mtu]");
  }

  for (int iter = 0; iter < 200; ++iter) {
    const Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mid <= lo || mid >= hi) break;
    if (v(mid) > Scalar(0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const Scalar best = std::abs(v(lo)) < std::abs(v(hi)) ? lo : hi;
  const Scalar tolerance = Scalar(1e-9) * p.f_max / p.c_ce;
  if (!(std::abs(v(best)) <= tolerance)) {
    throw NoEquilibriumError("CE velocity does not vanish at the bracketed crossing");
  }
  return best;
}

/// Maximum CE force as five body weights, 5 m g.
template <typename Scalar>
Scalar f_max_from_mass(Scalar body_mass) {
  if (!(body_mass > Scalar(0)) || !std::isfinite(body_mass)) {
    throw DomainError("body mass must be positive");
  }
  return Scalar(5) * body_mass * Scalar(kStandardGravity);
}

}  // namespace wfm
