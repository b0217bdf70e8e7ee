#include "wfm/pso.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <thread>

#include "wfm/errors.hpp"

namespace wfm {

namespace {

std::string format_position(const Eigen::VectorXd& x) {
  std::ostringstream out;
  out.precision(17);
  out << '[';
  for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? ", " : "") << x(i);
  out << ']';
  return out.str();
}

double checked_value(const Objective& objective, const Eigen::VectorXd& x) {
  const double value = objective(x);
  if (!std::isfinite(value)) {
    throw NumericalError("objective returned a non-finite value at " + format_position(x));
  }
  return value;
}

// Evaluates every particle's current position. Each slot is written by
// exactly one worker, so the result does not depend on the thread count.
std::vector<double> evaluate_swarm(const Objective& objective, const std::vector<Particle>& swarm,
                                   int threads) {
  std::vector<double> values(swarm.size());
  const auto n = static_cast<int>(swarm.size());
  const int workers = std::clamp(threads, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) values[i] = checked_value(objective, swarm[i].position);
    return values;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < n; i += workers) values[i] = checked_value(objective, swarm[i].position);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return values;
}

}  // namespace

void PsoConfig::validate() const {
  if (swarm_size < 2) throw DomainError("pso.swarm_size must be >= 2");
  if (max_iterations < 1) throw DomainError("pso.max_iterations must be >= 1");
  if (lower.size() == 0 || lower.size() != upper.size()) {
    throw DomainError("pso bounds must be non-empty with matching lower/upper sizes");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower(i)) || !std::isfinite(upper(i)) || !(lower(i) < upper(i))) {
      throw DomainError("pso bound " + std::to_string(i) + " must satisfy lo < hi");
    }
  }
  if (!std::isfinite(inertia) || !std::isfinite(cognitive) || !std::isfinite(social)) {
    throw DomainError("pso coefficients must be finite");
  }
  if (threads < 1) throw DomainError("pso.threads must be >= 1");
}

Particle update_particle(const Particle& particle, const Eigen::VectorXd& global_best,
                         const PsoConfig& cfg, const Eigen::VectorXd& r1,
                         const Eigen::VectorXd& r2) {
  const Eigen::Index n = cfg.dimension();
  if (particle.position.size() != n || particle.velocity.size() != n ||
      particle.best_position.size() != n || global_best.size() != n || r1.size() != n ||
      r2.size() != n) {
    throw DomainError("particle update: dimension mismatch");
  }
  Particle next = particle;
  next.velocity = cfg.inertia * particle.velocity +
                  cfg.cognitive * r1.cwiseProduct(particle.best_position - particle.position) +
                  cfg.social * r2.cwiseProduct(global_best - particle.position);
  next.position = particle.position + next.velocity;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (next.position(i) < cfg.lower(i)) {
      next.position(i) = cfg.lower(i);
      next.velocity(i) = 0.0;
    } else if (next.position(i) > cfg.upper(i)) {
      next.position(i) = cfg.upper(i);
      next.velocity(i) = 0.0;
    }
  }
  return next;
}

Particle update_particle(const Particle& particle, const Eigen::VectorXd& global_best,
                         const PsoConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index n = cfg.dimension();
  Eigen::VectorXd r1(n);
  Eigen::VectorXd r2(n);
  for (Eigen::Index i = 0; i < n; ++i) r1(i) = unit(rng);
  for (Eigen::Index i = 0; i < n; ++i) r2(i) = unit(rng);
  return update_particle(particle, global_best, cfg, r1, r2);
}

OptimizationResult optimize(const Objective& objective, const PsoConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = cfg.dimension();
  const Eigen::VectorXd span = cfg.upper - cfg.lower;
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Particle> swarm(static_cast<std::size_t>(cfg.swarm_size));
  for (auto& p : swarm) {
    p.position.resize(n);
    p.velocity.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) p.position(i) = cfg.lower(i) + unit(rng) * span(i);
    // Initial speeds up to a tenth of the box width in either direction.
    for (Eigen::Index i = 0; i < n; ++i) p.velocity(i) = (2.0 * unit(rng) - 1.0) * 0.1 * span(i);
    p.best_position = p.position;
  }

  OptimizationResult result;
  auto values = evaluate_swarm(objective, swarm, cfg.threads);
  std::size_t leader = 0;
  for (std::size_t k = 0; k < swarm.size(); ++k) {
    swarm[k].best_value = values[k];
    if (values[k] < values[leader]) leader = k;
  }
  result.best_position = swarm[leader].best_position;
  result.best_value = swarm[leader].best_value;
  result.history.push_back(result.best_value);

  for (int iter = 0; iter < cfg.max_iterations && result.best_value > cfg.target_tolerance; ++iter) {
    for (auto& p : swarm) p = update_particle(p, result.best_position, cfg, rng);
    values = evaluate_swarm(objective, swarm, cfg.threads);
    for (std::size_t k = 0; k < swarm.size(); ++k) {
      if (values[k] < swarm[k].best_value) {
        swarm[k].best_value = values[k];
        swarm[k].best_position = swarm[k].position;
      }
      if (swarm[k].best_value < result.best_value) {
        result.best_value = swarm[k].best_value;
        result.best_position = swarm[k].best_position;
      }
    }
    result.history.push_back(result.best_value);
    result.iterations_run = iter + 1;
  }
  return result;
}

}  // namespace wfm
