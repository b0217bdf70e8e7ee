#pragma once

// Run configuration: one JSON document (comments allowed) holding the model,
// activation templates, optimiser, simulation and data settings. See
// config/example.jsonc for the annotated schema.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "wfm/pipeline.hpp"
#include "wfm/pso.hpp"

namespace wfm {

struct SyntheticConfig {
  int train_subjects{4};
  int test_subjects{4};
  double noise_sd{0.0};
  std::uint64_t seed{kDefaultSeed};
};

struct RunConfig {
  MuscleModel model{default_model()};
  ActivationPair templates{default_activation_templates()};
  PsoConfig pso;  // bounds are filled from the fit problem unless given
  bool extended_fit{false};
  SimulationConfig simulation;
  SyntheticConfig synthetic;
  std::vector<std::filesystem::path> train_paths;
  std::vector<std::filesystem::path> test_paths;
  std::string output_dir{"wfm_out"};
};

RunConfig default_run_config();

/// Parses and validates. Relative data paths resolve against `base_dir`.
/// Throws ConfigError with the offending field path.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Full snapshot; parse_run_config(to_json(c), any) reproduces c.
nlohmann::json to_json(const RunConfig& config);

/// Expands directories to their *.csv files (sorted by name) and loads each trial.
std::vector<GaitTrial> load_trials(const std::vector<std::filesystem::path>& paths);

}  // namespace wfm
