#pragma once

#include <memory>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace gppcis {

enum class KernelKind { Rbf, Matern32, Matern52, Polynomial, Linear, Periodic, Sum, RbfArd };

/// Covariance function with positive hyperparameters.
///
/// Kernels are immutable values. Composite (sum) kernels share their
/// children, so copying is cheap and concurrent evaluation is safe.
///
/// Hyperparameters are exposed in log space for likelihood fitting; the
/// layout is kind specific:
///   Rbf/Matern:  [log sf2, log l]
///   Polynomial:  [log sf2, log c]         (degree is fixed)
///   Linear:      [log sf2, log c]
///   Periodic:    [log sf2, log l, log p]
///   RbfArd:      [log sf2, log l_1 .. log l_d]
///   Sum:         lhs params followed by rhs params
class Kernel {
 public:
  /// Unit RBF.
  Kernel() : lengthscales_(Eigen::VectorXd::Ones(1)) {}

  static Kernel rbf(double signal_variance, double lengthscale);
  static Kernel matern32(double signal_variance, double lengthscale);
  static Kernel matern52(double signal_variance, double lengthscale);
  static Kernel polynomial(double signal_variance, int degree, double offset = 1.0);
  static Kernel linear(double signal_variance, double offset = 1.0);
  static Kernel periodic(double signal_variance, double lengthscale, double period);
  static Kernel rbf_ard(double signal_variance, Eigen::VectorXd lengthscales);
  static Kernel sum(const Kernel& lhs, const Kernel& rhs);

  /// Builds a kernel from its configuration name with unit hyperparameters.
  /// Accepted names: rbf, matern32, matern52, poly<d>, linear, periodic,
  /// rbf-ard, and any two of them joined with '+'.
  static Kernel from_name(const std::string& name, Eigen::Index input_dim);

  KernelKind kind() const { return kind_; }
  std::string name() const;

  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  /// Cross covariance, element (i,j) = k(X_i, Y_j).
  Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const;
  /// Symmetric Gram matrix K(X,X); exactly symmetric.
  Eigen::MatrixXd gram(const Eigen::MatrixXd& X) const;
  /// k(X_i, X_i) for every row.
  Eigen::VectorXd diagonal(const Eigen::MatrixXd& X) const;

  /// Scale used for jitter: sf2 for simple kernels, the sum for composites.
  double signal_variance() const;

  Eigen::VectorXd log_params() const;
  Kernel with_log_params(const Eigen::VectorXd& log_params) const;
  /// Box bounds on log_params() used by the hyperparameter search.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> log_bounds() const;
  Eigen::Index num_params() const;

  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }
  double period() const { return period_; }
  double offset() const { return offset_; }
  int degree() const { return degree_; }

 private:
  // Applies the kernel to pairwise squared distances and inner products.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const;
  void check_dims(Eigen::Index dx, Eigen::Index dy) const;

  KernelKind kind_ = KernelKind::Rbf;
  double variance_ = 1.0;
  Eigen::VectorXd lengthscales_;
  double period_ = 1.0;
  double offset_ = 1.0;
  int degree_ = 1;
  std::shared_ptr<const Kernel> lhs_;
  std::shared_ptr<const Kernel> rhs_;
};

/// Pairwise squared Euclidean distances between rows of X and rows of Y.
template <typename DerivedX, typename DerivedY>
Eigen::MatrixXd squared_distances(const Eigen::MatrixBase<DerivedX>& X,
                                  const Eigen::MatrixBase<DerivedY>& Y) {
  Eigen::MatrixXd D(X.rows(), Y.rows());
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    D.col(j) = (X.rowwise() - Y.row(j)).rowwise().squaredNorm();
  }
  return D;
}

}  // namespace gppcis
