#include "gppcis/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <istream>
#include <sstream>

namespace gppcis {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_double(const std::string& s, int line) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + t + "'", line);
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& s, int line) {
  const std::string t = trim(s);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("expected an integer, got '" + t + "'", line);
  }
  return v;
}

// Value codecs, one overload set per field type.
std::string encode(double v) { return format_double(v); }
std::string encode(int v) { return std::to_string(v); }
std::string encode(std::uint64_t v) { return std::to_string(v); }
std::string encode(bool v) { return v ? "true" : "false"; }
std::string encode(const std::string& v) { return v; }

template <typename T>
std::string encode(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + encode(v[i]);
  return out;
}

std::string encode(const std::vector<std::vector<double>>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "; " : "") + encode(v[i]);
  return out;
}

void decode(const std::string& s, int line, double& v) { v = parse_double(s, line); }
void decode(const std::string& s, int line, int& v) { v = parse_int<int>(s, line); }
void decode(const std::string& s, int line, std::uint64_t& v) { v = parse_int<std::uint64_t>(s, line); }
void decode(const std::string& s, int line, std::string& v) {
  v = trim(s);
  if (v.empty()) throw ConfigError("empty value", line);
}
void decode(const std::string& s, int line, bool& v) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") v = true;
  else if (t == "false" || t == "0" || t == "no") v = false;
  else throw ConfigError("expected true or false, got '" + t + "'", line);
}

template <typename T>
void decode(const std::string& s, int line, std::vector<T>& v) {
  v.clear();
  if (trim(s).empty()) return;
  for (const std::string& item : split(s, ',')) {
    T x{};
    decode(item, line, x);
    v.push_back(x);
  }
}

void decode(const std::string& s, int line, std::vector<std::vector<double>>& v) {
  v.clear();
  if (trim(s).empty()) return;
  for (const std::string& group : split(s, ';')) {
    std::vector<double> g;
    decode(group, line, g);
    if (g.empty()) throw ConfigError("empty vector in list", line);
    v.push_back(std::move(g));
  }
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
};

template <typename T>
Field field(const char* section, const char* key, T ExperimentConfig::*member) {
  return {section, key, [member](const ExperimentConfig& c) { return encode(c.*member); },
          [member](ExperimentConfig& c, const std::string& s, int line) { decode(s, line, c.*member); }};
}

const std::vector<Field>& fields() {
  using E = ExperimentConfig;
  static const std::vector<Field> table{
      field("experiment", "plant", &E::plant),
      field("experiment", "seed", &E::seed),
      field("experiment", "iterations", &E::iterations),
      field("experiment", "steps_per_iteration", &E::steps_per_iteration),
      field("experiment", "record_stride", &E::record_stride),
      field("experiment", "initial_samples", &E::initial_samples),
      field("experiment", "initial_box_lower", &E::initial_box_lower),
      field("experiment", "initial_box_upper", &E::initial_box_upper),
      field("experiment", "pilot_valve_amplitude", &E::pilot_valve_amplitude),
      field("experiment", "target_mode", &E::target_mode),
      field("experiment", "targets", &E::targets),
      field("experiment", "unsafe_targets", &E::unsafe_targets),
      field("experiment", "level_fraction", &E::level_fraction),
      field("experiment", "validation_fraction", &E::validation_fraction),
      field("experiment", "eval_points", &E::eval_points),
      field("experiment", "eval_box_lower", &E::eval_box_lower),
      field("experiment", "eval_box_upper", &E::eval_box_upper),
      field("experiment", "grid_resolution", &E::grid_resolution),

      field("plant", "dt", &E::dt),
      field("plant", "state_lower", &E::state_lower),
      field("plant", "state_upper", &E::state_upper),
      field("plant", "input_lower", &E::input_lower),
      field("plant", "input_upper", &E::input_upper),
      field("plant", "sensor_stddev", &E::sensor_stddev),
      field("plant", "operating_state", &E::operating_state),
      field("plant", "initial_state", &E::initial_state),
      field("plant", "areas", &E::areas),
      field("plant", "outlet_area", &E::outlet_area),
      field("plant", "outlet_discharge", &E::outlet_discharge),
      field("plant", "coupling_area_12", &E::coupling_area_12),
      field("plant", "coupling_area_23", &E::coupling_area_23),
      field("plant", "coupling_discharge", &E::coupling_discharge),
      field("plant", "gravity", &E::gravity),
      field("plant", "h_min", &E::h_min),
      field("plant", "h_max", &E::h_max),
      field("plant", "tank_height", &E::tank_height),
      field("plant", "band_low", &E::band_low),
      field("plant", "band_high", &E::band_high),
      field("plant", "max_valve_rate", &E::max_valve_rate),
      field("plant", "pump_mean", &E::pump_mean),
      field("plant", "pump_sigma_eps", &E::pump_sigma_eps),
      field("plant", "pump_rho_d", &E::pump_rho_d),
      field("plant", "pump_sigma_d", &E::pump_sigma_d),

      field("control", "q_diag", &E::q_diag),
      field("control", "r_diag", &E::r_diag),
      field("control", "lambda", &E::lambda),
      field("control", "rho", &E::rho),
      field("control", "margin", &E::margin),
      field("control", "eta_factor", &E::eta_factor),
      field("control", "explore_weight", &E::explore_weight),

      field("gp", "kernel", &E::kernel),
      field("gp", "signal_variance", &E::signal_variance),
      field("gp", "lengthscales", &E::lengthscales),
      field("gp", "fit", &E::fit),
      field("gp", "refit_every", &E::refit_every),
      field("gp", "max_fit_points", &E::max_fit_points),
      field("gp", "restarts", &E::restarts),
      field("gp", "max_evaluations", &E::max_evaluations),
      field("gp", "sparse", &E::sparse),
      field("gp", "inducing", &E::inducing),
      field("gp", "learned_channels", &E::learned_channels),
      field("gp", "input_scale", &E::input_scale),
      field("gp", "output_scale", &E::output_scale),
      field("gp", "noise_floor", &E::noise_floor),

      field("calibration", "beta_mode", &E::beta_mode),
      field("calibration", "beta", &E::beta),
      field("calibration", "delta", &E::delta),
      field("calibration", "rkhs_bound", &E::rkhs_bound),
      field("calibration", "gain_constant", &E::gain_constant),
      field("calibration", "target_coverage", &E::target_coverage),
      field("calibration", "calibrate", &E::calibrate),

      field("bench", "kernels", &E::kernels),
      field("bench", "train_points", &E::train_points),
      field("bench", "test_points", &E::test_points),
      field("bench", "inducing_counts", &E::inducing_counts),
      field("bench", "sparse_train_points", &E::sparse_train_points),
      field("bench", "noise_stddev", &E::noise_stddev),
  };
  return table;
}

void check(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError(what, 0); };
  const std::size_t n = c.plant == "tank3" ? 3 : 2;
  const std::size_t m = c.plant == "tank3" ? 3 : 1;
  if (c.iterations < 1 || c.steps_per_iteration < 1 || c.record_stride < 1) fail("iteration counts must be positive");
  if (c.state_lower.size() != n || c.state_upper.size() != n) fail("state box has the wrong dimension");
  if (c.input_lower.size() != m || c.input_upper.size() != m) fail("input box has the wrong dimension");
  if (c.operating_state.size() != n || c.initial_state.size() != n) fail("operating/initial state dimension");
  if (c.initial_box_lower.size() != n || c.initial_box_upper.size() != n) fail("initial box dimension");
  if (c.eval_box_lower.size() != n || c.eval_box_upper.size() != n) fail("eval box dimension");
  if (c.q_diag.size() != n || c.r_diag.size() != m) fail("LQR weight dimension");
  if (c.input_scale.size() != n) fail("gp.input_scale dimension");
  if (c.output_scale.size() != c.learned_channels.size()) fail("gp.output_scale must match learned_channels");
  for (int ch : c.learned_channels) {
    if (ch < 1 || static_cast<std::size_t>(ch) > n) fail("learned channel out of range");
  }
  for (const auto& t : c.targets) {
    if (t.size() != n) fail("target dimension");
  }
  for (const auto& t : c.unsafe_targets) {
    if (t.size() != n) fail("unsafe target dimension");
  }
  if (c.areas.size() != 3) fail("plant.areas needs three entries");
  if (!(c.dt > 0.0)) fail("dt must be positive");
  if (c.grid_resolution < 20) fail("grid_resolution must be at least 20");
  if (!(c.level_fraction > 0.0 && c.level_fraction <= 1.0)) fail("level_fraction must lie in (0, 1]");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) fail("validation_fraction must lie in (0, 1)");
  if (c.beta_mode != "constant" && c.beta_mode != "schedule") fail("beta_mode must be constant or schedule");
  if (c.target_mode != "ucb" && c.target_mode != "fixed") fail("target_mode must be ucb or fixed");
  if (c.target_mode == "fixed" && c.targets.empty()) fail("fixed target mode needs targets");
}

}  // namespace

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string raw;
  int line = 0;
  Section* current = nullptr;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("malformed section header", line);
      const std::string name = trim(text.substr(1, text.size() - 2));
      if (name.empty()) throw ConfigError("empty section name", line);
      for (const Section& s : cfg.sections_) {
        if (s.name == name) throw ConfigError("duplicate section [" + name + "]", line);
      }
      current = &cfg.section(name, line);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    if (!current) throw ConfigError("key outside of a section", line);
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key", line);
    for (const Entry& e : current->entries) {
      if (e.key == key) throw ConfigError("duplicate key '" + key + "'", line);
    }
    current->entries.push_back({key, trim(text.substr(eq + 1)), line});
  }
  return cfg;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

std::string Config::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    if (i) out += "\n";
    out += "[" + sections_[i].name + "]\n";
    for (const Entry& e : sections_[i].entries) out += e.key + " = " + e.value + "\n";
  }
  return out;
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  for (const Section& s : sections_) {
    if (s.name != section) continue;
    for (const Entry& e : s.entries) {
      if (e.key == key) return &e;
    }
  }
  return nullptr;
}

void Config::set(const std::string& section_name, const std::string& key, const std::string& value) {
  Section& s = section(section_name, 0);
  for (Entry& e : s.entries) {
    if (e.key == key) {
      e.value = value;
      return;
    }
  }
  s.entries.push_back({key, value, 0});
}

Config::Section& Config::section(const std::string& name, int line) {
  for (Section& s : sections_) {
    if (s.name == name) return s;
  }
  sections_.push_back({name, {}, line});
  return sections_.back();
}

bool Config::operator==(const Config& other) const {
  if (sections_.size() != other.sections_.size()) return false;
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const Section& a = sections_[i];
    const Section& b = other.sections_[i];
    if (a.name != b.name || a.entries.size() != b.entries.size()) return false;
    for (std::size_t j = 0; j < a.entries.size(); ++j) {
      if (a.entries[j].key != b.entries[j].key || a.entries[j].value != b.entries[j].value) return false;
    }
  }
  return true;
}

ExperimentConfig default_config(const std::string& plant) {
  ExperimentConfig c;
  if (plant == "poly2d") return c;
  if (plant != "tank3") throw ConfigError("unknown plant '" + plant + "'", 0);

  c.plant = "tank3";
  c.iterations = 5;
  c.steps_per_iteration = 400;
  c.record_stride = 1;
  c.initial_samples = 200;
  c.initial_box_lower = {-0.01, -0.01, -0.01};
  c.initial_box_upper = {0.01, 0.01, 0.01};
  c.pilot_valve_amplitude = 0.05;
  c.targets.clear();
  c.unsafe_targets = {{0.1356, 0.142, 0.1356}};
  c.eval_box_lower = {0.2, 0.205, 0.2};
  c.eval_box_upper = {0.23, 0.235, 0.23};
  c.grid_resolution = 41;

  c.dt = 1.0;
  c.state_lower = {0.135, 0.135, 0.135};
  c.state_upper = {0.261, 0.261, 0.261};
  c.input_lower = {0.0, 0.0, 0.0};
  c.input_upper = {1.0, 1.0, 1.0};
  c.sensor_stddev = 1e-4;
  c.operating_state = {0.215, 0.22, 0.215};
  c.initial_state = {0.215, 0.22, 0.215};

  c.q_diag = {1.0, 1.0, 1.0};
  c.r_diag = {0.1, 0.1, 0.1};

  c.kernel = "matern32";
  c.max_fit_points = 300;
  c.lengthscales = {1.0, 1.0, 1.0};
  c.sparse = true;
  c.inducing = 30;
  c.learned_channels = {1, 2, 3};
  c.input_scale = {0.01, 0.01, 0.01};
  c.output_scale = {1e-4, 1e-4, 1e-4};
  c.noise_floor = 1e-6;

  c.beta = 2.797;
  c.inducing_counts = {10, 20, 30, 40};
  c.sparse_train_points = 200;
  return c;
}

ExperimentConfig from_config(const Config& config) {
  for (const Config::Section& s : config.sections()) {
    for (const Config::Entry& e : s.entries) {
      bool known = false;
      for (const Field& f : fields()) {
        if (s.name == f.section && e.key == f.key) known = true;
      }
      if (!known) {
        bool section_known = false;
        for (const Field& f : fields()) section_known = section_known || s.name == f.section;
        if (!section_known) throw ConfigError("unknown section [" + s.name + "]", s.line);
        throw ConfigError("unknown key '" + e.key + "' in [" + s.name + "]", e.line);
      }
    }
  }
  std::string plant = "poly2d";
  if (const Config::Entry* e = config.find("experiment", "plant")) {
    plant = trim(e->value);
    if (plant != "poly2d" && plant != "tank3") throw ConfigError("unknown plant '" + plant + "'", e->line);
  }
  ExperimentConfig c = default_config(plant);
  for (const Field& f : fields()) {
    if (const Config::Entry* e = config.find(f.section, f.key)) f.set(c, e->value, e->line);
  }
  check(c);
  return c;
}

Config to_config(const ExperimentConfig& c) {
  Config out;
  for (const Field& f : fields()) out.set(f.section, f.key, f.get(c));
  return out;
}

}  // namespace gppcis
