#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/config.hpp"
#include "gppcis/exploration.hpp"
#include "gppcis/gp.hpp"

namespace gppcis {

/// Train/test split of true residuals over the state box, in the scaled
/// units of the residual model; columns are the learned channels.
struct BenchData {
  Dataset train;
  Eigen::MatrixXd test_inputs;
  Eigen::MatrixXd test_targets;
};

BenchData make_bench_data(const Benchmark& bench, Eigen::Index train_points, Eigen::Index test_points);

struct KernelBenchRow {
  std::string kernel;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double log_likelihood = 0.0;  // summed over channels
  double coverage = 0.0;
  double sigma_bar = 0.0;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
};

/// Every kernel in bench.kernels fitted on the same data and scored on the same test set.
std::vector<KernelBenchRow> kernel_bench(const ExperimentConfig& config);
/// Kernel,RMSE,MAE,R^2,Log-lik.,Coverage,sigma_bar
void write_kernel_metrics_csv(std::ostream& out, const std::vector<KernelBenchRow>& rows);
/// Kernel,Train,Predict,Total
void write_kernel_cost_csv(std::ostream& out, const std::vector<KernelBenchRow>& rows);

struct SparseBenchRow {
  std::string model;
  Eigen::Index inducing = 0;  // n for the exact GP
  double rmse = 0.0;
  double r2 = 0.0;
  double coverage = 0.0;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;  // per batch over the test set
};

/// Exact GP against FITC for each M in bench.inducing_counts, sharing the
/// hyperparameters fitted on the exact model.
std::vector<SparseBenchRow> sparse_bench(const ExperimentConfig& config);
/// Model,RMSE,R^2,Coverage (%),Time (s),M,Predict (s)
void write_sparse_csv(std::ostream& out, const std::vector<SparseBenchRow>& rows);

/// Mean wall time of fn() over enough repetitions to fill min_seconds.
double time_repeated(const std::function<void()>& fn, double min_seconds = 0.05);

}  // namespace gppcis
