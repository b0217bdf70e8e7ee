#include "wfm/gait_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <system_error>

#include "wfm/errors.hpp"

namespace wfm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, const std::string& field, std::size_t line) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("field '" + field + "': cannot parse number '" + text + "'", line);
  }
  if (!std::isfinite(value)) {
    throw ParseError("field '" + field + "': non-finite value '" + text + "'", line);
  }
  return value;
}


const std::string& require_key(const HeaderMap& header, const std::string& key) {
  const auto it = header.find(key);
  if (it == header.end() || it->second.empty()) {
    throw ParseError("missing metadata key '" + key + "'", 0);
  }
  return it->second;
}

}  // namespace

std::string format_number(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

char to_char(Sex sex) { return sex == Sex::kFemale ? 'F' : 'M'; }

void GaitTrial::validate() const {
  if (subject_id.empty()) throw DomainError("trial subject_id is empty");
  const std::string who = "trial '" + subject_id + "': ";
  if (!(body_mass > 0.0) || !std::isfinite(body_mass)) throw DomainError(who + "body mass must be > 0");
  if (!(cycle_duration > 0.0) || !std::isfinite(cycle_duration)) {
    throw DomainError(who + "cycle duration must be > 0");
  }
  if (phase.size() != theta.size() || phase.size() != tau_ref.size()) {
    throw DomainError(who + "column lengths differ");
  }
  if (phase.size() < kMinTrialSamples) {
    throw DomainError(who + "needs at least " + std::to_string(kMinTrialSamples) + " samples");
  }
  if (phase(0) != 0.0 || phase(phase.size() - 1) != 1.0) {
    throw DomainError(who + "phase must start at 0 and end at 1");
  }
  for (Eigen::Index i = 1; i < phase.size(); ++i) {
    if (!(phase(i) > phase(i - 1))) throw DomainError(who + "non-monotone phase");
  }
  if (!theta.allFinite() || !tau_ref.allFinite()) throw DomainError(who + "non-finite sample");
}

void SubjectSplit::validate() const {
  if (train.empty()) throw DomainError("training split is empty");
  if (test.empty()) throw DomainError("test split is empty");
  std::set<std::string> train_ids;
  for (const auto& t : train) train_ids.insert(t.subject_id);
  for (const auto& t : test) {
    if (train_ids.count(t.subject_id)) {
      throw DomainError("subject '" + t.subject_id + "' appears in both train and test");
    }
  }
}

GaitTrial load_trial(std::istream& source, const HeaderMap& overrides) {
  HeaderMap header;
  std::vector<std::string> columns;
  std::vector<std::array<double, 3>> rows;
  int time_column = -1;
  int phase_column = -1;
  int theta_column = -1;
  int tau_column = -1;

  std::string line;
  std::size_t line_no = 0;
  std::size_t column_line = 0;
  while (std::getline(source, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      const auto eq = text.find('=');
      if (eq == std::string::npos) continue;
      header[trim(text.substr(1, eq - 1))] = trim(text.substr(eq + 1));
      continue;
    }
    if (columns.empty()) {
      columns = split_commas(text);
      column_line = line_no;
      for (int i = 0; i < static_cast<int>(columns.size()); ++i) {
        if (columns[i] == "phase") phase_column = i;
        if (columns[i] == "time_s") time_column = i;
        if (columns[i] == "theta_rad") theta_column = i;
        if (columns[i] == "tau_ref") tau_column = i;
      }
      if (phase_column < 0 && time_column < 0) {
        throw ParseError("missing column 'phase' (or 'time_s')", line_no);
      }
      if (phase_column >= 0 && time_column >= 0) {
        throw ParseError("both 'phase' and 'time_s' columns given", line_no);
      }
      if (theta_column < 0) throw ParseError("missing column 'theta_rad'", line_no);
      if (tau_column < 0) throw ParseError("missing column 'tau_ref'", line_no);
      continue;
    }
    const auto cells = split_commas(text);
    if (cells.size() != columns.size()) {
      throw ParseError("expected " + std::to_string(columns.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    const int x_column = phase_column >= 0 ? phase_column : time_column;
    rows.push_back({parse_number(cells[x_column], columns[x_column], line_no),
                    parse_number(cells[theta_column], "theta_rad", line_no),
                    parse_number(cells[tau_column], "tau_ref", line_no)});
    if (rows.size() >= 2 && !(rows.back()[0] > rows[rows.size() - 2][0])) {
      throw ParseError("non-monotone phase", line_no);
    }
  }
  if (columns.empty()) throw ParseError("empty file: no column header row", line_no);
  if (rows.empty()) throw ParseError("no data rows after the column header", column_line);

  for (const auto& [key, value] : overrides) header[key] = value;

  GaitTrial trial;
  trial.subject_id = require_key(header, "subject_id");
  const std::string sex = require_key(header, "sex");
  if (sex == "F" || sex == "f") {
    trial.sex = Sex::kFemale;
  } else if (sex == "M" || sex == "m") {
    trial.sex = Sex::kMale;
  } else {
    throw ParseError("metadata 'sex' must be F or M, got '" + sex + "'", 0);
  }
  trial.body_mass = parse_number(require_key(header, "body_mass_kg"), "body_mass_kg", 0);
  trial.cycle_duration = parse_number(require_key(header, "cycle_duration_s"), "cycle_duration_s", 0);
  if (const auto it = header.find("walking_speed_mps"); it != header.end() && !it->second.empty()) {
    trial.walking_speed = parse_number(it->second, "walking_speed_mps", 0);
  }
  if (const auto it = header.find("torque_unit"); it != header.end() && !it->second.empty()) {
    trial.torque_unit = it->second;
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  trial.phase.resize(n);
  trial.theta.resize(n);
  trial.tau_ref.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    trial.phase(i) = rows[i][0];
    trial.theta(i) = rows[i][1];
    trial.tau_ref(i) = rows[i][2];
  }
  if (time_column >= 0) {
    if (!(trial.cycle_duration > 0.0)) throw ParseError("cycle_duration_s must be > 0", 0);
    trial.phase /= trial.cycle_duration;
    // Absorb the rounding of t_end / cycle_duration.
    if (std::abs(trial.phase(n - 1) - 1.0) <= 1e-9) trial.phase(n - 1) = 1.0;
  }
  if (trial.phase(0) != 0.0) throw ParseError("first phase must be 0", 0);
  if (trial.phase(n - 1) != 1.0) throw ParseError("last phase must be 1", 0);
  try {
    trial.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), 0);
  }
  return trial;
}

GaitTrial load_trial_file(const std::string& path, const HeaderMap& overrides) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trial file '" + path + "'", 0);
  try {
    return load_trial(in, overrides);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void write_trial(std::ostream& out, const GaitTrial& trial) {
  trial.validate();
  out << "# subject_id = " << trial.subject_id << '\n'
      << "# sex = " << to_char(trial.sex) << '\n'
      << "# body_mass_kg = " << format_number(trial.body_mass) << '\n';
  if (trial.walking_speed) out << "# walking_speed_mps = " << format_number(*trial.walking_speed) << '\n';
  out << "# cycle_duration_s = " << format_number(trial.cycle_duration) << '\n'
      << "# torque_unit = " << trial.torque_unit << '\n'
      << "phase,theta_rad,tau_ref\n";
  for (Eigen::Index i = 0; i < trial.size(); ++i) {
    out << format_number(trial.phase(i)) << ',' << format_number(trial.theta(i)) << ','
        << format_number(trial.tau_ref(i)) << '\n';
  }
}

void write_trial_file(const std::string& path, const GaitTrial& trial) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trial file '" + path + "'");
  write_trial(out, trial);
}

Eigen::VectorXd uniform_phase_grid(Eigen::Index n) {
  if (n < 2) throw DomainError("phase grid needs at least 2 points");
  Eigen::VectorXd grid(n);
  for (Eigen::Index i = 0; i < n; ++i) grid(i) = static_cast<double>(i) / static_cast<double>(n - 1);
  grid(n - 1) = 1.0;
  return grid;
}

double interpolate_linear(const Eigen::Ref<const Eigen::VectorXd>& xs,
                          const Eigen::Ref<const Eigen::VectorXd>& ys, double x) {
  const Eigen::Index n = xs.size();
  if (x <= xs(0)) return ys(0);
  if (x >= xs(n - 1)) return ys(n - 1);
  const double* begin = xs.data();
  const auto upper = std::upper_bound(begin, begin + n, x) - begin;
  const Eigen::Index i = upper - 1;
  const double t = (x - xs(i)) / (xs(i + 1) - xs(i));
  return (1.0 - t) * ys(i) + t * ys(i + 1);
}

GaitTrial resample_trial(const GaitTrial& trial, Eigen::Index n) {
  if (n < 2) throw DomainError("resample size must be >= 2");
  trial.validate();
  GaitTrial out = trial;
  out.phase = uniform_phase_grid(n);
  out.theta.resize(n);
  out.tau_ref.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.theta(i) = interpolate_linear(trial.phase, trial.theta, out.phase(i));
    out.tau_ref(i) = interpolate_linear(trial.phase, trial.tau_ref, out.phase(i));
  }
  return out;
}

double theta_at(const GaitTrial& trial, double phase) {
  return interpolate_linear(trial.phase, trial.theta, phase);
}

double mean_theta(const GaitTrial& trial) {
  double area = 0.0;
  for (Eigen::Index i = 1; i < trial.size(); ++i) {
    area += 0.5 * (trial.theta(i) + trial.theta(i - 1)) * (trial.phase(i) - trial.phase(i - 1));
  }
  return area;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred,
            const Eigen::Ref<const Eigen::VectorXd>& ref) {
  if (pred.size() == 0 || ref.size() == 0) throw DomainError("rmse of an empty trace");
  if (pred.size() != ref.size()) {
    throw DomainError("rmse length mismatch: " + std::to_string(pred.size()) + " vs " +
                      std::to_string(ref.size()));
  }
  return std::sqrt((pred - ref).squaredNorm() / static_cast<double>(pred.size()));
}

}  // namespace wfm
