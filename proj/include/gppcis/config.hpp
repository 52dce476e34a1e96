#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gppcis {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line) : std::runtime_error(format(what, line)), line_(line) {}
  int line() const { return line_; }

 private:
  static std::string format(const std::string& what, int line) {
    return line > 0 ? "line " + std::to_string(line) + ": " + what : what;
  }
  int line_;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments.
/// Order of sections and keys is preserved so serialisation is stable.
class Config {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };
  struct Section {
    std::string name;
    std::vector<Entry> entries;
    int line = 0;
  };

  static Config parse(std::istream& in);
  static Config parse_string(const std::string& text);
  std::string serialize() const;

  const Entry* find(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  const std::vector<Section>& sections() const { return sections_; }

  bool operator==(const Config& other) const;

 private:
  Section& section(const std::string& name, int line);
  std::vector<Section> sections_;
};

/// Every tunable of an experiment. Coordinates in `targets`,
/// `unsafe_targets`, `eval_box_*`, `operating_state` and `initial_state` are
/// physical; `initial_box_*` is relative to the operating point.
struct ExperimentConfig {
  // [experiment]
  std::string plant = "poly2d";
  std::uint64_t seed = 7;
  int iterations = 12;
  int steps_per_iteration = 600;
  int record_stride = 2;
  int initial_samples = 100;
  std::vector<double> initial_box_lower{-0.5, -0.1};
  std::vector<double> initial_box_upper{0.5, 0.1};
  double pilot_valve_amplitude = 0.05;
  std::string target_mode = "ucb";
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<double>> unsafe_targets{{4.5, 0.0}, {-4.5, 0.0}};
  double level_fraction = 0.9;
  double validation_fraction = 0.2;
  int eval_points = 200;
  std::vector<double> eval_box_lower{-4.0, -0.5};
  std::vector<double> eval_box_upper{4.0, 0.5};
  int grid_resolution = 81;

  // [plant]
  double dt = 0.01;
  std::vector<double> state_lower{-5.0, -5.0};
  std::vector<double> state_upper{5.0, 5.0};
  std::vector<double> input_lower{-10.0};
  std::vector<double> input_upper{10.0};
  double sensor_stddev = 1e-4;
  std::vector<double> operating_state{0.0, 0.0};
  std::vector<double> initial_state{0.0, 0.0};
  std::vector<double> areas{0.015, 0.015, 0.015};
  double outlet_area = 5.0e-5;
  double outlet_discharge = 0.62;
  double coupling_area_12 = 3.0e-5;
  double coupling_area_23 = 3.0e-5;
  double coupling_discharge = 0.62;
  double gravity = 9.81;
  double h_min = 0.12;
  double h_max = 0.30;
  double tank_height = 0.30;
  double band_low = 0.45;
  double band_high = 0.87;
  double max_valve_rate = 1.0;
  double pump_mean = 1.5e-5;
  double pump_sigma_eps = 0.02;
  double pump_rho_d = 0.98;
  double pump_sigma_d = 1e-7;

  // [control]
  std::vector<double> q_diag{0.1, 0.1};
  std::vector<double> r_diag{0.1};
  double lambda = 0.0;  // 0 selects half the slowest closed-loop rate
  double rho = 0.0;     // 0 selects 1e3 lambda_max(R_s)
  bool margin = true;
  double eta_factor = 2.0;
  double explore_weight = 0.0;

  // [gp]
  std::string kernel = "rbf-ard";
  double signal_variance = 1.0;
  std::vector<double> lengthscales{1.0, 1.0};
  bool fit = true;
  int refit_every = 3;
  int max_fit_points = 500;
  int restarts = 2;
  int max_evaluations = 300;
  bool sparse = false;
  int inducing = 30;
  std::vector<int> learned_channels{2};  // 1-based
  std::vector<double> input_scale{1.0, 1.0};
  std::vector<double> output_scale{1.0};
  double noise_floor = 1e-6;

  // [calibration]
  std::string beta_mode = "constant";
  double beta = 2.5373;
  double delta = 0.05;
  double rkhs_bound = 1.0;
  double gain_constant = 1.0;
  double target_coverage = 0.95;
  bool calibrate = true;

  // [bench]
  std::vector<std::string> kernels{"rbf", "matern32", "matern52", "poly2", "rbf+linear", "rbf+periodic",
                                   "rbf+poly2", "rbf-ard"};
  int train_points = 300;
  int test_points = 200;
  std::vector<int> inducing_counts{10, 20, 30, 40};
  int sparse_train_points = 200;
  double noise_stddev = 1e-3;  // scaled output units
};

/// Defaults for a plant ("poly2d" or "tank3").
ExperimentConfig default_config(const std::string& plant);

/// Reads the plant key first, starts from its defaults and applies every
/// entry. Unknown sections/keys and malformed values throw ConfigError with
/// the offending line.
ExperimentConfig from_config(const Config& config);
Config to_config(const ExperimentConfig& config);

}  // namespace gppcis
