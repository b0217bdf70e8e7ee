#pragma once

#include <cstddef>
#include <vector>

#include "wfm/ankle_geometry.hpp"

namespace wfm {

struct ActivationNode {
  double phase{};
  double amplitude{};
};

/// Periodic piecewise-linear activation over the gait cycle. Nodes sit at
/// fixed phases; exactly one interior node (the peak) is free to move.
class ActivationCurve {
 public:
  /// Throws DomainError if the nodes are not strictly increasing from 0 to 1,
  /// if the endpoint amplitudes differ, or if an amplitude leaves [0, 1].
  ActivationCurve(std::vector<ActivationNode> nodes, std::size_t peak_index);

  const std::vector<ActivationNode>& nodes() const noexcept { return nodes_; }
  std::size_t peak_index() const noexcept { return peak_index_; }
  double peak_amplitude() const { return nodes_[peak_index_].amplitude; }

 private:
  std::vector<ActivationNode> nodes_;
  std::size_t peak_index_;
};

/// Phases outside [0, 1] wrap modulo 1.
double evaluate_activation(const ActivationCurve& curve, double phase);

/// Copy of `templ` with the peak node amplitude replaced.
ActivationCurve single_node_curve(const ActivationCurve& templ, double amplitude);

/// Anterior: swing-phase burst peaking at 65 % of the cycle.
/// Posterior: push-off burst peaking at 45 %.
ActivationCurve default_activation_template(Side side, double amplitude);

}  // namespace wfm
