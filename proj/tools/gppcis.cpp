#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gppcis/config.hpp"
#include "gppcis/csv.hpp"
#include "gppcis/experiments.hpp"
#include "gppcis/exploration.hpp"
#include "gppcis/pcis.hpp"

namespace fs = std::filesystem;
using namespace gppcis;

namespace {

constexpr int kConfigError = 2;
constexpr int kCollapse = 3;

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
  ExperimentConfig c = from_config(Config::parse(in));
  if (seed) c.seed = *seed;
  return c;
}

std::ofstream open(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void snapshot(const fs::path& dir, const ExperimentConfig& c) {
  fs::create_directories(dir);
  open(dir / "config.cfg") << to_config(c).serialize();
}

void write_run(const fs::path& dir, const RunLog& log) {
  auto steps = open(dir / "steps.csv");
  write_steps_csv(steps, log);
  if (log.safe) {
    auto it = open(dir / "iterations.csv");
    write_iteration_csv(it, log);
    auto derived = open(dir / "derived.csv");
    write_derived_csv(derived, log);
    auto cal = open(dir / "calibration.csv");
    write_calibration_csv(cal, log);
  }
  auto summary = open(dir / "summary.txt");
  write_summary(summary, log);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe exploration with GP residual models and probabilistic control-invariant sets"};
  app.require_subcommand(1);

  std::string config_path = "configs/poly2d.cfg";
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool unsafe = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file")->capture_default_str();
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the experiment seed");
  };
  auto* kernel_cmd = app.add_subcommand("kernel-bench", "Compare kernels on identical train/test data");
  auto* sparse_cmd = app.add_subcommand("sparse-bench", "Exact GP against FITC with several inducing counts");
  auto* explore_cmd = app.add_subcommand("explore", "Run the exploration loop");
  auto* certify_cmd = app.add_subcommand("certify", "Certify the initial set and report its axis ranges");
  for (auto* sub : {kernel_cmd, sparse_cmd, explore_cmd, certify_cmd}) add_common(sub);
  auto* safe_flag = explore_cmd->add_flag("--safe", "With the safety filter (default)");
  explore_cmd->add_flag("--unsafe", unsafe, "Nominal LQR tracking without the filter")->excludes(safe_flag);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = load(config_path, seed);
    const fs::path dir(out_dir);
    snapshot(dir, c);

    if (kernel_cmd->parsed()) {
      const auto rows = kernel_bench(c);
      auto m = open(dir / "kernel_metrics.csv");
      write_kernel_metrics_csv(m, rows);
      auto cost = open(dir / "kernel_cost.csv");
      write_kernel_cost_csv(cost, rows);
      write_kernel_metrics_csv(std::cout, rows);
    } else if (sparse_cmd->parsed()) {
      const auto rows = sparse_bench(c);
      auto out = open(dir / "sparse.csv");
      write_sparse_csv(out, rows);
      write_sparse_csv(std::cout, rows);
    } else if (explore_cmd->parsed()) {
      const RunLog log = unsafe ? run_unsafe_baseline(c) : run_safe(c);
      write_run(dir, log);
      write_summary(std::cout, log);
    } else if (certify_cmd->parsed()) {
      const Benchmark b = make_benchmark(c);
      const InitialState init = initialize(b);
      auto csv = open(dir / "certified_set.csv");
      write_certified_csv(csv, init.set, b.x_op);
      const CertifiedSummary s = summarize(init.set, b.x_op);
      auto report = open(dir / "summary.txt");
      for (std::ostream* o : {static_cast<std::ostream*>(&report), &std::cout}) {
        *o << "members: " << s.count << " of " << init.set.grid.size() << "\n";
        *o << "alpha_m: " << csv_number(s.alpha_m) << "\n";
        *o << "eta: " << csv_number(init.eta) << "\n";
        for (Eigen::Index i = 0; i < s.lower.size(); ++i) {
          *o << "x" << i + 1 << " in [" << csv_number(s.lower[i], 4) << ", " << csv_number(s.upper[i], 4) << "]\n";
        }
      }
      if (init.set.count == 0) {
        std::cerr << "certification collapse: the certified set is empty\n";
        return kCollapse;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CertificationCollapse& e) {
    try {
      write_run(fs::path(out_dir), e.log());
    } catch (const std::exception&) {
    }
    std::cerr << "certification collapse: " << e.what() << "\n";
    return kCollapse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
