#include "wfm/config.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "wfm/errors.hpp"

namespace wfm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A JSON object being read field by field; rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("", "must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config field '" + join(key) + "' " + what);
  }

  std::string join(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return node_.at(key);
  }

  Section child(const std::string& key) {
    if (!has(key)) return Section(empty_object(), join(key));
    return Section(raw(key), join(key));
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) fail(key, "must be a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<int>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(key, "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(key, "must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!used_.count(item.key())) fail(item.key(), "is not a recognised key");
    }
  }

 private:
  static const json& empty_object() {
    static const json kEmpty = json::object();
    return kEmpty;
  }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

// Runs `check` and re-labels a DomainError with the config field it came from.
template <typename Check>
void validate_field(const std::string& field, Check&& check) {
  try {
    check();
  } catch (const DomainError& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  }
}

void read_muscle(Section section, Side side, RunConfig& config) {
  WfmParams<>& p = config.model.params[side];
  p.k_ss = section.number("k_ss", p.k_ss);
  p.k_ts_passive = section.number("k_ts_passive", p.k_ts_passive);
  p.k_ts_active = section.number("k_ts_active", p.k_ts_active);
  p.c_ce = section.number("c_ce", p.c_ce);
  p.fl_width = section.number("fl_width", p.fl_width);
  p.l_t_slack = section.number("l_t_slack", p.l_t_slack);
  p.l_ts_rest = section.number("l_ts_rest", p.l_ts_rest);
  p.l_ce_opt = section.number("l_ce_opt", p.l_ce_opt);

  AttachmentGeometry<>& g = config.model.geometry[side];
  Section geometry = section.child("geometry");
  g.r_origin = geometry.number("r_origin", g.r_origin);
  g.r_insertion = geometry.number("r_insertion", g.r_insertion);
  if (geometry.has("phi_neutral_deg") && geometry.has("phi_neutral_rad")) {
    geometry.fail("phi_neutral_deg", "conflicts with phi_neutral_rad");
  }
  if (geometry.has("phi_neutral_deg")) {
    g.phi_neutral = geometry.number("phi_neutral_deg", 0.0) * std::numbers::pi / 180.0;
  }
  g.phi_neutral = geometry.number("phi_neutral_rad", g.phi_neutral);
  geometry.finish();
  section.finish();

  const std::string where = std::string("model.") + to_string(side);
  validate_field(where, [&] { p.validate(); });
  validate_field(where + ".geometry", [&] { g.validate(); });
}

ActivationCurve read_curve(Section section, const ActivationCurve& fallback) {
  std::vector<ActivationNode> nodes = fallback.nodes();
  std::size_t peak = fallback.peak_index();
  if (section.has("nodes")) {
    const json& list = section.raw("nodes");
    if (!list.is_array()) section.fail("nodes", "must be a list of [phase, amplitude] pairs");
    nodes.clear();
    for (const auto& pair : list) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
        section.fail("nodes", "must be a list of [phase, amplitude] pairs");
      }
      nodes.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
  }
  const int peak_index = section.integer("peak_index", static_cast<int>(peak));
  if (peak_index < 0) section.fail("peak_index", "must be >= 0");
  section.finish();
  try {
    return ActivationCurve(std::move(nodes), static_cast<std::size_t>(peak_index));
  } catch (const DomainError& e) {
    section.fail("", e.what());
  }
}

std::vector<fs::path> read_paths(Section& section, const std::string& key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!section.has(key)) return out;
  const json& list = section.raw(key);
  if (!list.is_array()) section.fail(key, "must be a list of paths");
  for (const auto& item : list) {
    if (!item.is_string()) section.fail(key, "must be a list of paths");
    fs::path p = item.get<std::string>();
    if (p.is_relative()) p = base / p;
    p = p.lexically_normal();
    if (!fs::exists(p)) section.fail(key, "refers to a missing path: " + p.string());
    out.push_back(p);
  }
  return out;
}

json curve_json(const ActivationCurve& curve) {
  json nodes = json::array();
  for (const auto& n : curve.nodes()) nodes.push_back({n.phase, n.amplitude});
  return {{"nodes", nodes}, {"peak_index", curve.peak_index()}};
}

json muscle_json(const WfmParams<>& p, const AttachmentGeometry<>& g) {
  return {{"k_ss", p.k_ss},
          {"k_ts_passive", p.k_ts_passive},
          {"k_ts_active", p.k_ts_active},
          {"c_ce", p.c_ce},
          {"fl_width", p.fl_width},
          {"l_t_slack", p.l_t_slack},
          {"l_ts_rest", p.l_ts_rest},
          {"l_ce_opt", p.l_ce_opt},
          {"geometry",
           {{"r_origin", g.r_origin}, {"r_insertion", g.r_insertion}, {"phi_neutral_rad", g.phi_neutral}}}};
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig config = default_run_config();
  Section root(doc, "");

  Section model = root.child("model");
  config.model.calibrate_rest_lengths =
      model.boolean("calibrate_rest_lengths", config.model.calibrate_rest_lengths);
  config.model.f_max_scale = model.number("f_max_scale", config.model.f_max_scale);
  if (!(config.model.f_max_scale > 0.0)) model.fail("f_max_scale", "must be > 0");
  Section rest = model.child("rest_fractions");
  config.model.rest.tendon = rest.number("tendon", config.model.rest.tendon);
  config.model.rest.titin = rest.number("titin", config.model.rest.titin);
  config.model.rest.contractile = rest.number("contractile", config.model.rest.contractile);
  rest.finish();
  validate_field("model.rest_fractions", [&] { config.model.rest.validate(); });
  read_muscle(model.child("anterior"), Side::kAnterior, config);
  read_muscle(model.child("posterior"), Side::kPosterior, config);
  model.finish();
  if (config.model.calibrate_rest_lengths) {
    // Keep the configured lengths consistent with the geometry until a trial recalibrates them.
    for (Side side : {Side::kAnterior, Side::kPosterior}) {
      validate_field(std::string("model.") + to_string(side) + ".geometry", [&] {
        config.model.params[side] = calibrate_rest_lengths(config.model.params[side],
                                                           config.model.geometry[side], 0.0,
                                                           config.model.rest);
      });
    }
  }

  Section activation = root.child("activation");
  config.templates.anterior = read_curve(activation.child("anterior"), config.templates.anterior);
  config.templates.posterior = read_curve(activation.child("posterior"), config.templates.posterior);
  activation.finish();

  Section pso = root.child("pso");
  config.pso.swarm_size = pso.integer("swarm_size", config.pso.swarm_size);
  config.pso.inertia = pso.number("inertia", config.pso.inertia);
  config.pso.cognitive = pso.number("cognitive", config.pso.cognitive);
  config.pso.social = pso.number("social", config.pso.social);
  config.pso.max_iterations = pso.integer("max_iterations", config.pso.max_iterations);
  config.pso.target_tolerance = pso.number("target_tolerance", config.pso.target_tolerance);
  config.pso.seed = pso.seed("seed", config.pso.seed);
  config.pso.threads = pso.integer("threads", config.pso.threads);
  config.extended_fit = pso.boolean("extended", config.extended_fit);
  if (pso.has("bounds")) {
    const json& bounds = pso.raw("bounds");
    if (!bounds.is_array()) pso.fail("bounds", "must be a list of [lo, hi] pairs");
    config.pso.lower.resize(static_cast<Eigen::Index>(bounds.size()));
    config.pso.upper.resize(static_cast<Eigen::Index>(bounds.size()));
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      const json& b = bounds[i];
      if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
        pso.fail("bounds", "must be a list of [lo, hi] pairs");
      }
      config.pso.lower(static_cast<Eigen::Index>(i)) = b[0].get<double>();
      config.pso.upper(static_cast<Eigen::Index>(i)) = b[1].get<double>();
    }
    const Eigen::Index dim = config.extended_fit ? 4 : 2;
    if (config.pso.lower.size() != dim) {
      pso.fail("bounds", "must have " + std::to_string(dim) + " entries for this search mode");
    }
  }
  pso.finish();
  {
    PsoConfig probe = config.pso;
    if (probe.lower.size() == 0) {
      probe.lower = Eigen::VectorXd::Zero(2);
      probe.upper = Eigen::VectorXd::Ones(2);
    }
    validate_field("pso", [&] { probe.validate(); });
  }

  Section simulation = root.child("simulation");
  config.simulation.steps_per_cycle = simulation.integer("steps_per_cycle", config.simulation.steps_per_cycle);
  config.simulation.warmup_cycles = simulation.integer("warmup_cycles", config.simulation.warmup_cycles);
  config.simulation.output_grid =
      simulation.integer("output_grid", static_cast<int>(config.simulation.output_grid));
  simulation.finish();
  validate_field("simulation", [&] { config.simulation.validate(); });

  Section synthetic = root.child("synthetic");
  config.synthetic.train_subjects = synthetic.integer("train_subjects", config.synthetic.train_subjects);
  config.synthetic.test_subjects = synthetic.integer("test_subjects", config.synthetic.test_subjects);
  config.synthetic.noise_sd = synthetic.number("noise_sd", config.synthetic.noise_sd);
  config.synthetic.seed = synthetic.seed("seed", config.synthetic.seed);
  if (config.synthetic.train_subjects < 1) synthetic.fail("train_subjects", "must be >= 1");
  if (config.synthetic.test_subjects < 1) synthetic.fail("test_subjects", "must be >= 1");
  if (!(config.synthetic.noise_sd >= 0.0)) synthetic.fail("noise_sd", "must be >= 0");
  synthetic.finish();

  Section data = root.child("data");
  config.train_paths = read_paths(data, "train", base_dir);
  config.test_paths = read_paths(data, "test", base_dir);
  data.finish();

  config.output_dir = root.string("output_dir", config.output_dir);
  root.finish();
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buffer.str(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& config) {
  json pso = {{"swarm_size", config.pso.swarm_size},
              {"inertia", config.pso.inertia},
              {"cognitive", config.pso.cognitive},
              {"social", config.pso.social},
              {"max_iterations", config.pso.max_iterations},
              {"target_tolerance", config.pso.target_tolerance},
              {"seed", config.pso.seed},
              {"threads", config.pso.threads},
              {"extended", config.extended_fit}};
  if (config.pso.lower.size() > 0) {
    json bounds = json::array();
    for (Eigen::Index i = 0; i < config.pso.lower.size(); ++i) {
      bounds.push_back({config.pso.lower(i), config.pso.upper(i)});
    }
    pso["bounds"] = bounds;
  }
  auto paths = [](const std::vector<fs::path>& list) {
    json out = json::array();
    for (const auto& p : list) out.push_back(p.string());
    return out;
  };
  return {
      {"model",
       {{"calibrate_rest_lengths", config.model.calibrate_rest_lengths},
        {"f_max_scale", config.model.f_max_scale},
        {"rest_fractions",
         {{"tendon", config.model.rest.tendon},
          {"titin", config.model.rest.titin},
          {"contractile", config.model.rest.contractile}}},
        {"anterior", muscle_json(config.model.params.anterior, config.model.geometry.anterior)},
        {"posterior", muscle_json(config.model.params.posterior, config.model.geometry.posterior)}}},
      {"activation",
       {{"anterior", curve_json(config.templates.anterior)},
        {"posterior", curve_json(config.templates.posterior)}}},
      {"pso", pso},
      {"simulation",
       {{"steps_per_cycle", config.simulation.steps_per_cycle},
        {"warmup_cycles", config.simulation.warmup_cycles},
        {"output_grid", config.simulation.output_grid}}},
      {"synthetic",
       {{"train_subjects", config.synthetic.train_subjects},
        {"test_subjects", config.synthetic.test_subjects},
        {"noise_sd", config.synthetic.noise_sd},
        {"seed", config.synthetic.seed}}},
      {"data", {{"train", paths(config.train_paths)}, {"test", paths(config.test_paths)}}},
      {"output_dir", config.output_dir},
  };
}

std::vector<GaitTrial> load_trials(const std::vector<fs::path>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<GaitTrial> trials;
  trials.reserve(files.size());
  for (const auto& f : files) trials.push_back(load_trial_file(f.string()));
  return trials;
}

}  // namespace wfm
