#pragma once

// Global-best particle swarm optimisation over a bounded box.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace wfm {

using Rng = std::mt19937_64;
using Objective = std::function<double(const Eigen::VectorXd&)>;

inline constexpr std::uint64_t kDefaultSeed = 20190601;

struct PsoConfig {
  int swarm_size{30};
  double inertia{0.7298};
  double cognitive{1.49618};
  double social{1.49618};
  int max_iterations{300};
  double target_tolerance{0.0};
  std::uint64_t seed{kDefaultSeed};
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  // Objective evaluations per iteration are spread over this many threads.
  // Results do not depend on it.
  int threads{1};

  Eigen::Index dimension() const { return lower.size(); }
  void validate() const;
};

struct Particle {
  Eigen::VectorXd position;
  Eigen::VectorXd velocity;
  Eigen::VectorXd best_position;
  double best_value{};
};

struct OptimizationResult {
  Eigen::VectorXd best_position;
  double best_value{};
  std::vector<double> history;  // global best after initialisation, then after each iteration
  int iterations_run{};
};

/// v <- w v + c1 r1 o (pbest - x) + c2 r2 o (gbest - x);  x <- clamp(x + v).
/// Clamped components get zero velocity. `r1`, `r2` are the per-component
/// uniform draws.
Particle update_particle(const Particle& particle, const Eigen::VectorXd& global_best,
                         const PsoConfig& cfg, const Eigen::VectorXd& r1,
                         const Eigen::VectorXd& r2);

/// Draws r1 then r2 (component order) from `rng` and applies the update.
Particle update_particle(const Particle& particle, const Eigen::VectorXd& global_best,
                         const PsoConfig& cfg, Rng& rng);

/// Minimises `objective` over [cfg.lower, cfg.upper]. Stops after
/// cfg.max_iterations or once the global best is <= cfg.target_tolerance.
/// Throws NumericalError if the objective returns a non-finite value.
OptimizationResult optimize(const Objective& objective, const PsoConfig& cfg);

}  // namespace wfm
