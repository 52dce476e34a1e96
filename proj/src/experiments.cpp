#include "gppcis/experiments.hpp"

#include <ostream>

#include "gppcis/calibration.hpp"
#include "gppcis/csv.hpp"
#include "gppcis/metrics.hpp"
#include "gppcis/rng.hpp"
#include "gppcis/sparse_gp.hpp"

namespace gppcis {

namespace {

struct Scores {
  double rmse = 0.0, mae = 0.0, r2 = 0.0, coverage = 0.0, sigma_bar = 0.0;
};

Scores score(const BatchPrediction& p, const Eigen::MatrixXd& truth) {
  const Eigen::Index n = truth.size();
  const Eigen::VectorXd mu = p.mean.reshaped();
  const Eigen::VectorXd y = truth.reshaped();
  const Eigen::VectorXd sd = p.stddev.reshaped();
  Scores s;
  s.rmse = rmse(mu, y);
  s.mae = mae(mu, y);
  s.r2 = r2(mu, y);
  s.coverage = coverage(y - mu, sd);
  s.sigma_bar = n ? sd.mean() : 0.0;
  return s;
}

std::vector<Kernel> fit_kernels(const Dataset& data, const Kernel& initial, const ExperimentConfig& c) {
  FitOptions fo;
  fo.fit_hyperparameters = true;
  fo.restarts = c.restarts;
  fo.max_evaluations = c.max_evaluations;
  fo.seed = c.seed;
  std::vector<Kernel> out;
  for (Eigen::Index ch = 0; ch < data.output_dim(); ++ch) {
    out.push_back(fit_hyperparameters(data.inputs, data.targets.col(ch), data.noise_variance[ch], initial, fo));
  }
  return out;
}

}  // namespace

BenchData make_bench_data(const Benchmark& b, Eigen::Index train_points, Eigen::Index test_points) {
  const ExperimentConfig& c = b.config;
  auto rng = make_stream(c.seed, "bench-data");
  auto noise_rng = make_stream(c.seed, "bench-noise");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  const Eigen::Index n = b.x_op.size();
  const auto& channels = b.model_options.learned_channels;
  const auto q = static_cast<Eigen::Index>(channels.size());

  auto draw = [&](Eigen::Index rows, Eigen::MatrixXd& X, Eigen::MatrixXd& Y) {
    X.resize(rows, n);
    Y.resize(rows, q);
    for (Eigen::Index i = 0; i < rows; ++i) {
      Eigen::VectorXd x(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        x[j] = b.state_box.lower[j] + (b.state_box.upper[j] - b.state_box.lower[j]) * unit(rng);
      }
      const Eigen::VectorXd g = true_residual(b, x);
      X.row(i) = x.cwiseQuotient(b.model_options.input_scale).transpose();
      for (Eigen::Index k = 0; k < q; ++k) Y(i, k) = g[channels[static_cast<std::size_t>(k)]] / b.model_options.output_scale[k];
    }
  };
  BenchData d;
  draw(train_points, d.train.inputs, d.train.targets);
  for (Eigen::Index i = 0; i < d.train.targets.size(); ++i) d.train.targets.data()[i] += c.noise_stddev * normal(noise_rng);
  d.train.noise_variance = Eigen::VectorXd::Constant(q, c.noise_stddev * c.noise_stddev);
  draw(test_points, d.test_inputs, d.test_targets);
  return d;
}

double time_repeated(const std::function<void()>& fn, double min_seconds) {
  long reps = 0;
  Stopwatch watch;
  do {
    fn();
    ++reps;
  } while (watch.seconds() < min_seconds);
  return watch.seconds() / static_cast<double>(reps);
}

std::vector<KernelBenchRow> kernel_bench(const ExperimentConfig& c) {
  const Benchmark b = make_benchmark(c);
  const BenchData d = make_bench_data(b, c.train_points, c.test_points);
  std::vector<KernelBenchRow> rows;
  for (const std::string& name : c.kernels) {
    KernelBenchRow row;
    row.kernel = name;
    Stopwatch train;
    const std::vector<Kernel> kernels = fit_kernels(d.train, Kernel::from_name(name, d.train.input_dim()), c);
    const GpPosterior post = fit(d.train, kernels);
    row.train_seconds = train.seconds();
    BatchPrediction p;
    row.predict_seconds = time_repeated([&] { p = predict(post, d.test_inputs); }, 0.0);
    const Scores s = score(p, d.test_targets);
    row.rmse = s.rmse;
    row.mae = s.mae;
    row.r2 = s.r2;
    row.coverage = s.coverage;
    row.sigma_bar = s.sigma_bar;
    row.log_likelihood = log_marginal_likelihood(post).sum();
    rows.push_back(row);
  }
  return rows;
}

void write_kernel_metrics_csv(std::ostream& out, const std::vector<KernelBenchRow>& rows) {
  write_csv_row(out, std::vector<std::string>{"Kernel", "RMSE", "MAE", "R^2", "Log-lik.", "Coverage", "sigma_bar"});
  for (const auto& r : rows) {
    write_csv_row(out, std::vector<std::string>{r.kernel, csv_number(r.rmse), csv_number(r.mae), csv_number(r.r2),
                                                csv_number(r.log_likelihood), csv_number(r.coverage),
                                                csv_number(r.sigma_bar)});
  }
}

void write_kernel_cost_csv(std::ostream& out, const std::vector<KernelBenchRow>& rows) {
  write_csv_row(out, std::vector<std::string>{"Kernel", "Train", "Predict", "Total"});
  for (const auto& r : rows) {
    write_csv_row(out, std::vector<std::string>{r.kernel, csv_number(r.train_seconds, 4),
                                                csv_number(r.predict_seconds, 4),
                                                csv_number(r.train_seconds + r.predict_seconds, 4)});
  }
}

std::vector<SparseBenchRow> sparse_bench(const ExperimentConfig& c) {
  const Benchmark b = make_benchmark(c);
  const BenchData d = make_bench_data(b, c.sparse_train_points, c.test_points);
  std::vector<SparseBenchRow> rows;

  SparseBenchRow full;
  full.model = "Full GP";
  full.inducing = d.train.size();
  Stopwatch train;
  const std::vector<Kernel> kernels = fit_kernels(d.train, b.kernels.front(), c);
  const GpPosterior post = fit(d.train, kernels);
  full.train_seconds = train.seconds();
  BatchPrediction p;
  full.predict_seconds = time_repeated([&] { p = predict(post, d.test_inputs); });
  Scores s = score(p, d.test_targets);
  full.rmse = s.rmse;
  full.r2 = s.r2;
  full.coverage = s.coverage;
  rows.push_back(full);

  for (int M : c.inducing_counts) {
    if (M < 1 || M > d.train.size()) continue;
    SparseBenchRow row;
    row.model = "Sparse GP (M=" + std::to_string(M) + ")";
    row.inducing = M;
    Stopwatch t2;
    const SparsePosterior sp = fit_sparse(d.train, kernels, M, c.seed);
    row.train_seconds = t2.seconds();
    row.predict_seconds = time_repeated([&] { p = predict(sp, d.test_inputs); });
    s = score(p, d.test_targets);
    row.rmse = s.rmse;
    row.r2 = s.r2;
    row.coverage = s.coverage;
    rows.push_back(row);
  }
  return rows;
}

void write_sparse_csv(std::ostream& out, const std::vector<SparseBenchRow>& rows) {
  write_csv_row(out, std::vector<std::string>{"Model", "RMSE", "R^2", "Coverage (%)", "Time (s)", "M", "Predict (s)"});
  for (const auto& r : rows) {
    write_csv_row(out, std::vector<std::string>{r.model, csv_number(r.rmse), csv_number(r.r2),
                                                csv_number(100.0 * r.coverage, 4), csv_number(r.train_seconds, 4),
                                                std::to_string(r.inducing), csv_number(r.predict_seconds, 4)});
  }
}

}  // namespace gppcis
