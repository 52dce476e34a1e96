#pragma once

#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/config.hpp"
#include "gppcis/control.hpp"
#include "gppcis/pcis.hpp"
#include "gppcis/plants.hpp"
#include "gppcis/residual_model.hpp"

namespace gppcis {

/// A plant with its operating point, nominal model and learning setup.
/// Boxes, the grid and all model inputs are in deviation coordinates
/// (x - x_op, u - u_op).
struct Benchmark {
  ExperimentConfig config;
  std::unique_ptr<Plant> plant;
  Eigen::VectorXd x_op;
  Eigen::VectorXd u_op;
  double w_op = 0.0;
  LinearModel model;
  Clf clf;
  Box state_box;
  Box input_box;
  Box eval_box;
  Eigen::MatrixXd sensor_cov;
  Eigen::VectorXd obs_noise;  // residual observation noise variance per state component
  ResidualModelOptions model_options;
  std::vector<Kernel> kernels;  // configured prior, one per learned channel
  GridSpec grid;
  bool stochastic_pump = false;
  PumpModel pump;
};

Benchmark make_benchmark(const ExperimentConfig& config);

/// f(x_op + x, u_op, w_op) - A x: the part of the dynamics the nominal model misses.
Eigen::VectorXd true_residual(const Benchmark& bench, const Eigen::VectorXd& x);

/// Midpoint residual observation from two measurements one step apart:
/// input (y0 + y1)/2, target (y1 - y0)/dt - A (y0 + y1)/2 - B u.
std::pair<Eigen::VectorXd, Eigen::VectorXd> residual_observation(const LinearModel& model, const Eigen::VectorXd& y0,
                                                                 const Eigen::VectorXd& y1, const Eigen::VectorXd& u,
                                                                 double dt);

/// Row of `candidates` maximising beta * score; near-ties (1e-12 relative)
/// go to the candidate farthest from `current`. Throws on an empty set.
Eigen::Index select_target(const Eigen::MatrixXd& candidates, const Eigen::VectorXd& score, double beta,
                           const Eigen::VectorXd& current);

/// rho_k = beta sigma / |mu|.
double exploration_ratio(double beta, double sigma, double mu);

struct StepRecord {
  double t = 0.0;
  int iteration = 0;
  Eigen::VectorXd x;  // physical, at t
  Eigen::VectorXd u;  // physical, applied over [t, t + dt)
  Eigen::VectorXd target;  // physical
  double s = 0.0;
  double b = 0.0;
  double margin = 0.0;
  double beta = 0.0;
  double sigma_agg = 0.0;
  bool intervened = false;
  bool violation = false;
  bool envelope_violation = false;
};

struct IterationRecord {
  int iteration = 0;
  Eigen::Index set_size = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double coverage = 0.0;
  double sigma_bar = 0.0;
  double mpiw = 0.0;
  double calibration_error = 0.0;
  double mu_k = 0.0;
  double sigma_k = 0.0;
  double rho_k = 0.0;
  double target_shift = 0.0;
  Eigen::Index train_points = 0;
  double gamma = 1.0;
  double calibration_coverage_raw = 0.0;
  double calibration_coverage = 0.0;
  double beta = 0.0;
  double alpha_m = 0.0;
  bool target_fallback = false;
  Eigen::VectorXd target;  // physical
  double fit_seconds = 0.0;
  double certify_seconds = 0.0;
  double rollout_seconds = 0.0;
};

struct RunLog {
  std::string plant;
  bool safe = true;
  std::vector<StepRecord> steps;
  std::vector<IterationRecord> iterations;
  long violations = 0;
  long envelope_violations = 0;
  long set_exits = 0;        // states whose nearest grid node is not certified
  long ellipsoid_exits = 0;  // states with V(x) above the largest level set inside X
  double eta = 0.0;
  double cumulative_risk = 0.0;
  Eigen::VectorXd x_op;
  CertifiedSet initial_set;
  CertifiedSet final_set;
  bool aborted = false;
  std::string abort_reason;
};

/// Thrown when certification returns an empty set; carries the partial log.
class CertificationCollapse : public std::runtime_error {
 public:
  CertificationCollapse(const std::string& what, RunLog log) : std::runtime_error(what), log_(std::move(log)) {}
  const RunLog& log() const { return log_; }

 private:
  RunLog log_;
};

/// Initial data, calibrated model and certified set before any exploration.
struct InitialState {
  Dataset data;
  Eigen::MatrixXd pilot_states;  // physical
  Eigen::MatrixXd pilot_inputs;  // physical
  ResidualModel model;           // calibrated
  double eta = 0.0;
  double beta = 0.0;
  CertifiedSet set;
  double calibration_coverage_raw = 0.0;
  double calibration_coverage = 0.0;
};

InitialState initialize(const Benchmark& bench);

/// Predicate with the CLF centred at `center` (deviation coordinates).
PcisPredicate make_predicate(const Benchmark& bench, const ResidualModel& model, double beta, double eta,
                             const Eigen::VectorXd& center);

RunLog run_safe(const ExperimentConfig& config);
RunLog run_unsafe_baseline(const ExperimentConfig& config);

/// Columns: Iter,|S|,RMSE,MAE,R^2,Coverage,sigma_bar,Train pts
void write_iteration_csv(std::ostream& out, const RunLog& log);
/// Columns: Iter,Cal. Err.,MPIW,mu_k,sigma_k,rho_k,||x*_k - x_{k-1}||
void write_derived_csv(std::ostream& out, const RunLog& log);
void write_calibration_csv(std::ostream& out, const RunLog& log);
void write_steps_csv(std::ostream& out, const RunLog& log);
/// Human-readable report including timings.
void write_summary(std::ostream& out, const RunLog& log);

}  // namespace gppcis
