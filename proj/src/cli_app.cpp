#include "wfm/cli_app.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wfm/config.hpp"
#include "wfm/errors.hpp"
#include "wfm/pipeline.hpp"
#include "wfm/pso.hpp"

namespace wfm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> trials;
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::optional<double> anterior_amplitude;
  std::optional<double> posterior_amplitude;
  std::optional<int> train_subjects;
  std::optional<int> test_subjects;
  std::optional<double> noise_sd;
  bool extended{false};
};

// Collects the files a run writes so the manifest can list them.
class RunOutputs {
 public:
  explicit RunOutputs(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  std::ofstream open(const std::string& name) {
    const fs::path path = dir_ / name;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    written_.push_back(name);
    return out;
  }

  void write_json(const std::string& name, const json& doc) { open(name) << doc.dump(2) << '\n'; }

  const std::vector<std::string>& written() const { return written_; }

 private:
  fs::path dir_;
  std::vector<std::string> written_;
};

std::vector<fs::path> as_paths(const std::vector<std::string>& items) {
  std::vector<fs::path> out;
  for (const auto& s : items) {
    if (!fs::exists(s)) throw ConfigError("path does not exist: " + s);
    out.push_back(fs::absolute(s).lexically_normal());
  }
  return out;
}

ActivationPair curves_with_overrides(const RunConfig& config, const Options& opts) {
  ActivationPair curves = config.templates;
  if (opts.anterior_amplitude) curves.anterior = single_node_curve(curves.anterior, *opts.anterior_amplitude);
  if (opts.posterior_amplitude) {
    curves.posterior = single_node_curve(curves.posterior, *opts.posterior_amplitude);
  }
  return curves;
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return out;
}

void run_simulate(const RunConfig& config, const Options& opts, RunOutputs& outputs, std::ostream& out) {
  std::vector<fs::path> sources = as_paths(opts.trials);
  if (sources.empty()) {
    sources = config.train_paths;
    sources.insert(sources.end(), config.test_paths.begin(), config.test_paths.end());
  }
  const auto trials = load_trials(sources);
  if (trials.empty()) throw ConfigError("no trials to simulate: pass --trial or set data.train/data.test");
  const ActivationPair curves = curves_with_overrides(config, opts);
  for (const auto& trial : trials) {
    const auto trace = simulate_gait(trial, curves, config.model.subject_params(trial),
                                     config.model.geometry, config.simulation);
    const Eigen::VectorXd reference = reference_on_grid(trial, config.simulation.output_grid);
    auto file = outputs.open("trace_" + safe_name(trial.subject_id) + ".csv");
    write_trace_csv(file, trace, reference);
    out << trial.subject_id << ": rmse " << format_number(rmse(trace.tau_model, reference)) << ' '
        << trial.torque_unit << '\n';
  }
}

void run_optimize(RunConfig config, const Options& opts, RunOutputs& outputs, std::ostream& out) {
  const auto sources = opts.train.empty() ? config.train_paths : as_paths(opts.train);
  auto trials = load_trials(sources);
  if (trials.empty()) throw ConfigError("no training data: pass --train or set data.train");
  const bool extended = config.extended_fit || opts.extended;
  FitProblem problem(std::move(trials), config.templates, config.model, config.simulation, extended);

  PsoConfig pso = config.pso;
  if (pso.lower.size() == 0) {
    pso.lower = problem.lower_bounds();
    pso.upper = problem.upper_bounds();
  }
  if (pso.lower.size() != problem.dimension()) {
    throw ConfigError("pso.bounds must have " + std::to_string(problem.dimension()) + " entries");
  }
  if ((pso.lower.array() < problem.lower_bounds().array()).any() ||
      (pso.upper.array() > problem.upper_bounds().array()).any()) {
    throw ConfigError("pso.bounds must lie inside the admissible search box");
  }

  const OptimizationResult result = optimize([&](const Eigen::VectorXd& x) { return problem(x); }, pso);
  const Eigen::VectorXd& best = result.best_position;

  json summary = {{"anterior_amplitude", best(0)},
                  {"posterior_amplitude", best(1)},
                  {"objective", result.best_value},
                  {"iterations", result.iterations_run},
                  {"training_subjects", json::array()}};
  for (const auto& t : problem.trials()) summary["training_subjects"].push_back(t.subject_id);
  if (extended) {
    summary["f_max_scale"] = best(2);
    summary["stiffness_scale"] = best(3);
  }
  outputs.write_json("optimize_result.json", summary);

  {
    auto history = outputs.open("history.csv");
    history << "iteration,best_value\n";
    for (std::size_t i = 0; i < result.history.size(); ++i) {
      history << i << ',' << format_number(result.history[i]) << '\n';
    }
  }

  RunConfig fitted = config;
  fitted.templates = problem.curves_for(best);
  fitted.model = problem.model_for(best);
  fitted.extended_fit = false;
  fitted.pso.lower.resize(0);
  fitted.pso.upper.resize(0);
  outputs.write_json("config_optimized.json", to_json(fitted));

  out << "anterior amplitude  " << format_number(best(0)) << '\n'
      << "posterior amplitude " << format_number(best(1)) << '\n';
  if (extended) {
    out << "f_max scale         " << format_number(best(2)) << '\n'
        << "stiffness scale     " << format_number(best(3)) << '\n';
  }
  out << "mean training RMSE  " << format_number(result.best_value) << '\n';
}

void run_evaluate(const RunConfig& config, const Options& opts, RunOutputs& outputs, std::ostream& out) {
  SubjectSplit split;
  split.train = load_trials(opts.train.empty() ? config.train_paths : as_paths(opts.train));
  split.test = load_trials(opts.test.empty() ? config.test_paths : as_paths(opts.test));
  if (split.train.empty() || split.test.empty()) {
    throw ConfigError("evaluate needs both training and test trials (data.train / data.test)");
  }
  const EvaluationReport report =
      evaluate_split(split, curves_with_overrides(config, opts), config.model, config.simulation);
  {
    auto text = outputs.open("report.txt");
    render_report_text(text, report);
  }
  {
    auto csv = outputs.open("report.csv");
    write_report_csv(csv, report);
  }
  render_report_text(out, report);
}

void run_gen_synthetic(const RunConfig& config, const Options& opts, RunOutputs& outputs,
                       std::ostream& out) {
  const int n_train = opts.train_subjects.value_or(config.synthetic.train_subjects);
  const int n_test = opts.test_subjects.value_or(config.synthetic.test_subjects);
  const double noise = opts.noise_sd.value_or(config.synthetic.noise_sd);
  const SubjectSplit split = generate_synthetic_split(config.templates, config.model, n_train, n_test,
                                                      noise, config.synthetic.seed, config.simulation);
  for (const auto& t : split.train) {
    auto file = outputs.open("train/" + safe_name(t.subject_id) + ".csv");
    write_trial(file, t);
  }
  for (const auto& t : split.test) {
    auto file = outputs.open("test/" + safe_name(t.subject_id) + ".csv");
    write_trial(file, t);
  }
  RunConfig dataset = config;
  dataset.synthetic.train_subjects = n_train;
  dataset.synthetic.test_subjects = n_test;
  dataset.synthetic.noise_sd = noise;
  // Relative paths resolve against the directory holding this config.
  dataset.train_paths = {"train"};
  dataset.test_paths = {"test"};
  outputs.write_json("synthetic_config.json", to_json(dataset));
  out << "wrote " << split.train.size() << " training and " << split.test.size()
      << " test trials to " << outputs.dir().string() << '\n';
}

fs::path resolve_output_dir(const Options& opts, const RunConfig& config) {
  if (!opts.output_dir.empty()) return opts.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Winding-filament ankle torque simulation and activation fitting", "wfm"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options opts;
  app.add_option("-c,--config", opts.config_path, "Run configuration (JSON, comments allowed)");
  app.add_option("-o,--out", opts.output_dir,
                 std::string("Output directory (overrides $") + kOutputDirEnv + " and output_dir)");
  app.add_option("--seed", opts.seed, "Seed for the optimiser and the synthetic generator");
  app.add_option("--threads", opts.threads, "Threads for objective evaluation");

  auto* simulate = app.add_subcommand("simulate", "Simulate torque traces for trials");
  simulate->add_option("--trial", opts.trials, "Trial CSV files or directories");
  simulate->add_option("--anterior-amplitude", opts.anterior_amplitude, "Anterior peak activation");
  simulate->add_option("--posterior-amplitude", opts.posterior_amplitude, "Posterior peak activation");

  auto* optimize_cmd = app.add_subcommand("optimize", "Fit the activation amplitudes by PSO");
  optimize_cmd->add_option("--train", opts.train, "Training trial CSV files or directories");
  optimize_cmd->add_flag("--extended", opts.extended, "Also fit F_max and stiffness scales");

  auto* evaluate = app.add_subcommand("evaluate", "Train/test RMSE report");
  evaluate->add_option("--train", opts.train, "Training trial CSV files or directories");
  evaluate->add_option("--test", opts.test, "Test trial CSV files or directories");
  evaluate->add_option("--anterior-amplitude", opts.anterior_amplitude, "Anterior peak activation");
  evaluate->add_option("--posterior-amplitude", opts.posterior_amplitude, "Posterior peak activation");

  auto* generate = app.add_subcommand("gen-synthetic", "Write a synthetic train/test dataset");
  generate->add_option("--train-subjects", opts.train_subjects, "Number of training subjects");
  generate->add_option("--test-subjects", opts.test_subjects, "Number of test subjects");
  generate->add_option("--noise", opts.noise_sd, "Gaussian noise SD added to the reference torque");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  RunConfig config;
  try {
    config = opts.config_path.empty() ? default_run_config() : load_run_config(opts.config_path);
    if (opts.seed) {
      config.pso.seed = *opts.seed;
      config.synthetic.seed = *opts.seed;
    }
    if (opts.threads) {
      if (*opts.threads < 1) throw ConfigError("--threads must be >= 1");
      config.pso.threads = *opts.threads;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }

  std::string command;
  for (const auto* sub : {simulate, optimize_cmd, evaluate, generate}) {
    if (sub->parsed()) command = sub->get_name();
  }

  const fs::path dir = resolve_output_dir(opts, config);
  const fs::path failure_marker = dir / "FAILED";
  RunOutputs outputs(dir);
  int status = kExitSuccess;
  std::string failure;
  try {
    fs::create_directories(dir);
    fs::remove(failure_marker);
    if (command == "simulate") run_simulate(config, opts, outputs, out);
    if (command == "optimize") run_optimize(config, opts, outputs, out);
    if (command == "evaluate") run_evaluate(config, opts, outputs, out);
    if (command == "gen-synthetic") run_gen_synthetic(config, opts, outputs, out);
  } catch (const NumericalError& e) {
    status = kExitNumericalFailure;
    failure = e.what();
  } catch (const std::exception& e) {
    status = kExitDataError;
    failure = e.what();
  }

  try {
    if (status != kExitSuccess) {
      err << "error: " << failure << '\n';
      std::ofstream marker(failure_marker);
      marker << command << " failed (exit " << status << "): " << failure << '\n';
      marker << "files written before the failure:\n";
      for (const auto& name : outputs.written()) marker << "  " << name << '\n';
      return status;
    }
    json manifest = {{"tool", "wfm"},
                     {"version", kVersion},
                     {"command", command},
                     {"seed", command == "gen-synthetic" ? config.synthetic.seed : config.pso.seed},
                     {"outputs", outputs.written()},
                     {"config", to_json(config)}};
    std::ofstream file(dir / "manifest.json", std::ios::binary);
    file << manifest.dump(2) << '\n';
    if (!file) throw DataError("cannot write manifest");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return status;
}

}  // namespace wfm
