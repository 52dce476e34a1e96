#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/gp.hpp"
#include "gppcis/kernels.hpp"

namespace gppcis {

/// FITC sparse posterior over M inducing inputs, one factorisation per channel.
///
/// With V = L_M^{-1} K_Mn and Lambda = diag(K_nn - V^T V) + sn2, the cached
/// quantities are L_A = chol(I + V Lambda^{-1} V^T) and the projected weights
/// w = A^{-1} V Lambda^{-1} (y - m). A query then costs O(M^2):
///   mean = m + v*^T w,   var = k** - |v*|^2 + |L_A^{-1} v*|^2,  v* = L_M^{-1} k_M*.
class SparsePosterior {
 public:
  struct Channel {
    Kernel kernel;
    double noise_variance = 1.0;
    Eigen::MatrixXd chol_mm;  // L_M
    Eigen::MatrixXd chol_a;   // L_A
    Eigen::VectorXd weights;  // w
    Eigen::VectorXd fitc_diagonal;  // diag(K_nn - Q_nn), clamped at 0
  };

  Eigen::Index num_inducing() const { return inducing_.rows(); }
  Eigen::Index input_dim() const { return inducing_.cols(); }
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(channels_.size()); }
  double prior_mean() const { return prior_mean_; }
  const Eigen::MatrixXd& inducing() const { return inducing_; }
  const Channel& channel(Eigen::Index i) const { return channels_.at(static_cast<std::size_t>(i)); }

 private:
  friend SparsePosterior fit_sparse(const Dataset&, const std::vector<Kernel>&, const Eigen::MatrixXd&, double);

  double prior_mean_ = 0.0;
  Eigen::MatrixXd inducing_;
  std::vector<Channel> channels_;
};

/// Deterministic farthest-point selection: a seeded random first row, then
/// repeatedly the row farthest from everything chosen so far.
std::vector<Eigen::Index> farthest_point_indices(const Eigen::MatrixXd& X, Eigen::Index count, std::uint64_t seed);

/// Explicit inducing inputs Z (M x d).
SparsePosterior fit_sparse(const Dataset& data, const std::vector<Kernel>& kernels, const Eigen::MatrixXd& inducing,
                           double prior_mean = 0.0);
/// Selects M rows of the training inputs by farthest-point sampling.
SparsePosterior fit_sparse(const Dataset& data, const Kernel& kernel, Eigen::Index num_inducing,
                           std::uint64_t seed = 11, double prior_mean = 0.0);
SparsePosterior fit_sparse(const Dataset& data, const std::vector<Kernel>& kernels, Eigen::Index num_inducing,
                           std::uint64_t seed = 11, double prior_mean = 0.0);

BatchPrediction predict(const SparsePosterior& posterior, const Eigen::MatrixXd& X);
Prediction predict(const SparsePosterior& posterior, const Eigen::VectorXd& x);
/// Expressions: column vectors are single queries, anything else a batch.
template <typename Derived>
auto predict(const SparsePosterior& posterior, const Eigen::MatrixBase<Derived>& x) {
  if constexpr (Derived::ColsAtCompileTime == 1) return predict(posterior, Eigen::VectorXd(x));
  else return predict(posterior, Eigen::MatrixXd(x));
}

}  // namespace gppcis
