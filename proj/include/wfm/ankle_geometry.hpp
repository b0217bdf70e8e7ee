#pragma once

// Two-point attachment geometry for the lumped anterior (dorsiflexor) and
// posterior (plantarflexor) ankle muscles. Angles and torques are
// dorsiflexion-positive.

#include <cmath>
#include <numbers>
#include <string>

#include "wfm/errors.hpp"

namespace wfm {

enum class Side { kAnterior, kPosterior };

inline const char* to_string(Side side) {
  return side == Side::kAnterior ? "anterior" : "posterior";
}

template <typename T>
struct AntagonistPair {
  T anterior;
  T posterior;

  const T& operator[](Side side) const { return side == Side::kAnterior ? anterior : posterior; }
  T& operator[](Side side) { return side == Side::kAnterior ? anterior : posterior; }
};

template <typename Scalar = double>
struct AttachmentGeometry {
  Scalar r_origin{};     // origin distance from the joint centre along the shank [m]
  Scalar r_insertion{};  // insertion distance along the foot [m]
  Scalar phi_neutral{};  // included angle between the segments at theta = 0 [rad]
  Side side{Side::kAnterior};

  void validate() const {
    if (!(r_origin > Scalar(0)) || !std::isfinite(r_origin)) {
      throw DomainError("AttachmentGeometry.r_origin must be > 0");
    }
    if (!(r_insertion > Scalar(0)) || !std::isfinite(r_insertion)) {
      throw DomainError("AttachmentGeometry.r_insertion must be > 0");
    }
    if (!(phi_neutral > Scalar(0) && phi_neutral < Scalar(std::numbers::pi))) {
      throw DomainError("AttachmentGeometry.phi_neutral must lie in (0, pi)");
    }
  }
};

template <typename Scalar = double>
struct JointSample {
  Scalar theta{};  // [rad], dorsiflexion-positive
  Scalar phase{};  // gait-cycle fraction in [0, 1]
};

/// Shank-scale defaults; per-subject values belong in the run config.
template <typename Scalar = double>
AttachmentGeometry<Scalar> default_geometry(Side side) {
  constexpr Scalar deg = Scalar(std::numbers::pi) / Scalar(180);
  if (side == Side::kAnterior) return {Scalar(0.30), Scalar(0.10), Scalar(80) * deg, side};
  return {Scalar(0.35), Scalar(0.05), Scalar(100) * deg, side};
}

/// Dorsiflexion closes the anterior included angle and opens the posterior one.
template <typename Scalar>
Scalar included_angle(Scalar theta, const AttachmentGeometry<Scalar>& g) {
  const Scalar sigma = g.side == Side::kAnterior ? Scalar(-1) : Scalar(1);
  const Scalar phi = g.phi_neutral + sigma * theta;
  // The closed interval keeps the collinear limits (|r_o - r_i| and r_o + r_i) reachable.
  if (!(phi >= Scalar(0) && phi <= Scalar(std::numbers::pi))) {
    throw GeometryRangeError(std::string(to_string(g.side)) + " included angle " +
                             std::to_string(double(phi)) + " rad is outside [0, pi]");
  }
  return phi;
}

template <typename Scalar>
Scalar muscle_length(Scalar theta, const AttachmentGeometry<Scalar>& g) {
  const Scalar phi = included_angle(theta, g);
  const Scalar ro = g.r_origin;
  const Scalar ri = g.r_insertion;
  return std::sqrt(ro * ro + ri * ri - Scalar(2) * ro * ri * std::cos(phi));
}

/// |dL/dtheta| = r_o r_i sin(phi) / L.
template <typename Scalar>
Scalar moment_arm(Scalar theta, const AttachmentGeometry<Scalar>& g) {
  const Scalar phi = included_angle(theta, g);
  const Scalar length = muscle_length(theta, g);
  const Scalar s = std::sin(phi);
  if (s == Scalar(0)) return Scalar(0);
  if (!(length > Scalar(0))) {
    throw GeometryRangeError(std::string(to_string(g.side)) + " muscle has zero length");
  }
  return std::abs(g.r_origin * g.r_insertion * s / length);
}

/// Net joint torque, dorsiflexion-positive: the anterior muscle dorsiflexes,
/// the posterior one plantarflexes.
template <typename Scalar>
Scalar ankle_torque(Scalar f_anterior, Scalar f_posterior, Scalar theta,
                    const AttachmentGeometry<Scalar>& g_anterior,
                    const AttachmentGeometry<Scalar>& g_posterior) {
  if (!(f_anterior >= Scalar(0)) || !(f_posterior >= Scalar(0))) {
    throw DomainError("muscle forces must be non-negative");
  }
  return moment_arm(theta, g_anterior) * f_anterior - moment_arm(theta, g_posterior) * f_posterior;
}

}  // namespace wfm
