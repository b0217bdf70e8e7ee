#include "wfm/activation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wfm/errors.hpp"

namespace wfm {

namespace {

void require_amplitude(double amplitude) {
  if (!(amplitude >= 0.0 && amplitude <= 1.0)) {
    throw DomainError("activation amplitude must lie in [0, 1], got " + std::to_string(amplitude));
  }
}

}  // namespace

ActivationCurve::ActivationCurve(std::vector<ActivationNode> nodes, std::size_t peak_index)
    : nodes_(std::move(nodes)), peak_index_(peak_index) {
  if (nodes_.size() < 3) throw DomainError("activation curve needs at least 3 nodes");
  if (nodes_.front().phase != 0.0 || nodes_.back().phase != 1.0) {
    throw DomainError("activation curve must start at phase 0 and end at phase 1");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    require_amplitude(nodes_[i].amplitude);
    if (i > 0 && !(nodes_[i].phase > nodes_[i - 1].phase)) {
      throw DomainError("activation node phases must be strictly increasing (node " +
                        std::to_string(i) + ")");
    }
  }
  if (nodes_.front().amplitude != nodes_.back().amplitude) {
    throw DomainError("activation curve must be periodic: amplitudes at phase 0 and 1 differ");
  }
  if (peak_index_ == 0 || peak_index_ + 1 >= nodes_.size()) {
    throw DomainError("activation peak node must be an interior node");
  }
}

double evaluate_activation(const ActivationCurve& curve, double phase) {
  if (!std::isfinite(phase)) throw DomainError("activation phase must be finite");
  if (phase < 0.0 || phase > 1.0) phase -= std::floor(phase);

  const auto& nodes = curve.nodes();
  auto upper = std::upper_bound(nodes.begin(), nodes.end(), phase,
                                [](double p, const ActivationNode& n) { return p < n.phase; });
  if (upper == nodes.end()) return nodes.back().amplitude;
  const auto& right = *upper;
  const auto& left = *(upper - 1);
  const double t = (phase - left.phase) / (right.phase - left.phase);
  // Convex combination: exact at nodes and monotone in either amplitude.
  const double value = (1.0 - t) * left.amplitude + t * right.amplitude;
  return std::clamp(value, 0.0, 1.0);
}

ActivationCurve single_node_curve(const ActivationCurve& templ, double amplitude) {
  require_amplitude(amplitude);
  auto nodes = templ.nodes();
  nodes[templ.peak_index()].amplitude = amplitude;
  return ActivationCurve(std::move(nodes), templ.peak_index());
}

ActivationCurve default_activation_template(Side side, double amplitude) {
  if (side == Side::kAnterior) {
    return ActivationCurve({{0.0, 0.0}, {0.55, 0.0}, {0.65, amplitude}, {0.75, 0.0}, {1.0, 0.0}}, 2);
  }
  return ActivationCurve({{0.0, 0.0}, {0.30, 0.0}, {0.45, amplitude}, {0.60, 0.0}, {1.0, 0.0}}, 2);
}

}  // namespace wfm
