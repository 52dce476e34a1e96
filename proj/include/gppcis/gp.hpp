#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/kernels.hpp"

namespace gppcis {

/// Training data for a multi-output residual model. Row i of `inputs` pairs
/// with row i of `targets`; every output channel has its own noise variance.
struct Dataset {
  Eigen::MatrixXd inputs;          // n x d
  Eigen::MatrixXd targets;         // n x q
  Eigen::VectorXd noise_variance;  // q

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  Eigen::Index output_dim() const { return targets.cols(); }

  /// Throws if shapes disagree or a noise variance is not positive.
  void validate() const;
  /// Appends rows; dimensions must match.
  void append(const Eigen::MatrixXd& new_inputs, const Eigen::MatrixXd& new_targets);
  /// Rows selected by index, same noise model.
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// Per-query mean and standard deviation, one entry per output channel.
struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

/// Batch version; row i holds the prediction for query i.
struct BatchPrediction {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd stddev;
};

struct FitOptions {
  bool fit_hyperparameters = false;
  double prior_mean = 0.0;
  int restarts = 3;
  int max_evaluations = 400;
  // Likelihood fitting uses at most this many (evenly strided) rows; 0 = all.
  Eigen::Index max_fit_points = 0;
  std::uint64_t seed = 7;
};

/// Exact GP posterior: q independent single-output GPs sharing inputs.
///
/// Each channel stores the Cholesky factor of K + sn2 I and the weight vector
/// alpha = (K + sn2 I)^{-1} (y - m). A default-constructed or empty-data
/// posterior answers with the prior.
class GpPosterior {
 public:
  struct Channel {
    Kernel kernel;
    double noise_variance = 1.0;
    double jitter = 0.0;
    Eigen::MatrixXd chol_lower;  // L with L L^T = K + (sn2 + jitter) I
    Eigen::VectorXd alpha;
  };

  GpPosterior() = default;

  Eigen::Index size() const { return inputs_.rows(); }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(channels_.size()); }
  double prior_mean() const { return prior_mean_; }
  const Channel& channel(Eigen::Index i) const { return channels_.at(static_cast<std::size_t>(i)); }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::MatrixXd& targets() const { return targets_; }
  Dataset dataset() const;

 private:
  friend GpPosterior fit(const Dataset&, const Kernel&, const FitOptions&);
  friend GpPosterior fit(const Dataset&, const std::vector<Kernel>&, const FitOptions&);

  Eigen::Index input_dim_ = 0;
  double prior_mean_ = 0.0;
  Eigen::MatrixXd inputs_;
  Eigen::MatrixXd targets_;
  std::vector<Channel> channels_;
};

/// Conditions one kernel template per channel (copied to every channel).
GpPosterior fit(const Dataset& data, const Kernel& kernel, const FitOptions& options = {});
/// Per-channel kernels; `kernels.size()` must equal the output dimension.
GpPosterior fit(const Dataset& data, const std::vector<Kernel>& kernels, const FitOptions& options = {});

Prediction predict(const GpPosterior& posterior, const Eigen::VectorXd& x);
BatchPrediction predict(const GpPosterior& posterior, const Eigen::MatrixXd& X);
/// Expressions: column vectors are single queries, anything else a batch.
template <typename Derived>
auto predict(const GpPosterior& posterior, const Eigen::MatrixBase<Derived>& x) {
  if constexpr (Derived::ColsAtCompileTime == 1) return predict(posterior, Eigen::VectorXd(x));
  else return predict(posterior, Eigen::MatrixXd(x));
}

/// -1/2 y^T alpha - sum log diag(L) - n/2 log(2 pi), per channel.
Eigen::VectorXd log_marginal_likelihood(const GpPosterior& posterior);

/// Exact refit on the concatenated data with the current hyperparameters.
GpPosterior update(const GpPosterior& posterior, const Eigen::MatrixXd& new_inputs,
                   const Eigen::MatrixXd& new_targets);

/// Maximises the log marginal likelihood of a single output column over the
/// kernel's log hyperparameters (bounded multi-start Nelder-Mead).
Kernel fit_hyperparameters(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           double noise_variance, const Kernel& initial, const FitOptions& options);

/// Log marginal likelihood of one column for a given kernel; -inf when the
/// Gram matrix cannot be factorised.
double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               double noise_variance, const Kernel& kernel, double prior_mean = 0.0);

/// Cholesky of K + added I with jitter escalation (x10 from base_jitter sf2 up to 1e-4 sf2).
/// With added > 0 the unjittered matrix is tried first. Returns the lower
/// factor and the jitter that was used; throws on failure.
std::pair<Eigen::MatrixXd, double> jittered_cholesky(const Eigen::MatrixXd& K, double added_diagonal,
                                                     double signal_variance, double base_jitter = 1e-8);

/// CSV with header x1..xd,y1..yq. Noise variances are not stored.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in, Eigen::Index input_dim, const Eigen::VectorXd& noise_variance);

}  // namespace gppcis
