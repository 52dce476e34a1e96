#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/gp.hpp"
#include "gppcis/kernels.hpp"
#include "gppcis/sparse_gp.hpp"

namespace gppcis {

struct ResidualModelOptions {
  std::vector<Eigen::Index> learned_channels;  // state components with a GP
  Eigen::VectorXd input_scale;                 // per state component
  Eigen::VectorXd output_scale;                // per learned channel
  bool sparse = false;
  Eigen::Index inducing = 30;
  std::uint64_t inducing_seed = 11;
};

/// GP model of the residual dynamics on the full state vector.
///
/// Data are stored in physical units (inputs are deviation states, targets
/// are full residual vectors). Each learned channel has its own GP, trained
/// in scaled coordinates; unlearned channels predict mean 0 and stddev 0.
/// The calibration factor gamma inflates the stddev returned by
/// predict_calibrated(): sigma_tilde = sqrt(gamma) sigma.
class ResidualModel {
 public:
  /// `kernels` act on scaled inputs, one per learned channel. When
  /// `fit_options.fit_hyperparameters` is set they are refitted first.
  static ResidualModel build(const Dataset& data, const std::vector<Kernel>& kernels,
                             const ResidualModelOptions& options, const FitOptions& fit_options = {});

  Eigen::Index state_dim() const { return state_dim_; }
  Eigen::Index training_size() const { return training_size_; }
  const std::vector<Kernel>& kernels() const { return kernels_; }
  const ResidualModelOptions& options() const { return options_; }
  double gamma() const { return gamma_; }
  ResidualModel with_gamma(double gamma) const;

  /// Rows are queries; columns are state components (physical units).
  BatchPrediction predict(const Eigen::MatrixXd& X) const;
  Prediction predict(const Eigen::VectorXd& x) const;
  BatchPrediction predict_calibrated(const Eigen::MatrixXd& X) const;
  Prediction predict_calibrated(const Eigen::VectorXd& x) const;

  /// Observation noise variance per state component (0 where unlearned).
  const Eigen::VectorXd& noise_variance() const { return noise_variance_; }

 private:
  Eigen::Index state_dim_ = 0;
  Eigen::Index training_size_ = 0;
  ResidualModelOptions options_;
  std::vector<Kernel> kernels_;
  Eigen::VectorXd noise_variance_;
  double gamma_ = 1.0;
  std::optional<GpPosterior> exact_;
  std::optional<SparsePosterior> sparse_;
};

}  // namespace gppcis
