#include "gppcis/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gppcis {

namespace {

constexpr double kMinLogVariance = -9.210340371976182;  // log 1e-4
constexpr double kMaxLogVariance = 9.210340371976182;   // log 1e4
constexpr double kMinLogLength = -4.605170185988091;    // log 1e-2
constexpr double kMaxLogLength = 4.605170185988091;     // log 1e2

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(std::string("kernel hyperparameter must be positive: ") + what);
  }
}

Kernel parse_simple(const std::string& name, Eigen::Index dim) {
  if (name == "rbf") return Kernel::rbf(1.0, 1.0);
  if (name == "matern32") return Kernel::matern32(1.0, 1.0);
  if (name == "matern52") return Kernel::matern52(1.0, 1.0);
  if (name == "linear") return Kernel::linear(1.0, 1.0);
  if (name == "periodic") return Kernel::periodic(1.0, 1.0, 2.0);
  if (name == "rbf-ard") return Kernel::rbf_ard(1.0, Eigen::VectorXd::Ones(dim));
  if (name.rfind("poly", 0) == 0) {
    const std::string digits = name.substr(4);
    if (digits.empty()) return Kernel::polynomial(1.0, 2);
    return Kernel::polynomial(1.0, std::stoi(digits));
  }
  throw std::invalid_argument("unknown kernel name: " + name);
}

}  // namespace

Kernel Kernel::rbf(double signal_variance, double lengthscale) {
  require_positive(signal_variance, "signal variance");
  require_positive(lengthscale, "lengthscale");
  Kernel k;
  k.kind_ = KernelKind::Rbf;
  k.variance_ = signal_variance;
  k.lengthscales_ = Eigen::VectorXd::Constant(1, lengthscale);
  return k;
}

Kernel Kernel::matern32(double signal_variance, double lengthscale) {
  Kernel k = rbf(signal_variance, lengthscale);
  k.kind_ = KernelKind::Matern32;
  return k;
}

Kernel Kernel::matern52(double signal_variance, double lengthscale) {
  Kernel k = rbf(signal_variance, lengthscale);
  k.kind_ = KernelKind::Matern52;
  return k;
}

Kernel Kernel::polynomial(double signal_variance, int degree, double offset) {
  require_positive(signal_variance, "signal variance");
  require_positive(offset, "offset");
  if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
  Kernel k;
  k.kind_ = KernelKind::Polynomial;
  k.variance_ = signal_variance;
  k.degree_ = degree;
  k.offset_ = offset;
  return k;
}

Kernel Kernel::linear(double signal_variance, double offset) {
  Kernel k = polynomial(signal_variance, 1, offset);
  k.kind_ = KernelKind::Linear;
  return k;
}

Kernel Kernel::periodic(double signal_variance, double lengthscale, double period) {
  require_positive(period, "period");
  Kernel k = rbf(signal_variance, lengthscale);
  k.kind_ = KernelKind::Periodic;
  k.period_ = period;
  return k;
}

Kernel Kernel::rbf_ard(double signal_variance, Eigen::VectorXd lengthscales) {
  require_positive(signal_variance, "signal variance");
  if (lengthscales.size() == 0) throw std::invalid_argument("ARD kernel needs lengthscales");
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) require_positive(lengthscales[i], "lengthscale");
  Kernel k;
  k.kind_ = KernelKind::RbfArd;
  k.variance_ = signal_variance;
  k.lengthscales_ = std::move(lengthscales);
  return k;
}

Kernel Kernel::sum(const Kernel& lhs, const Kernel& rhs) {
  Kernel k;
  k.kind_ = KernelKind::Sum;
  k.lhs_ = std::make_shared<const Kernel>(lhs);
  k.rhs_ = std::make_shared<const Kernel>(rhs);
  return k;
}

Kernel Kernel::from_name(const std::string& name, Eigen::Index input_dim) {
  const auto plus = name.find('+');
  if (plus == std::string::npos) return parse_simple(name, input_dim);
  return sum(parse_simple(name.substr(0, plus), input_dim),
             from_name(name.substr(plus + 1), input_dim));
}

std::string Kernel::name() const {
  switch (kind_) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Matern32: return "matern32";
    case KernelKind::Matern52: return "matern52";
    case KernelKind::Polynomial: return "poly" + std::to_string(degree_);
    case KernelKind::Linear: return "linear";
    case KernelKind::Periodic: return "periodic";
    case KernelKind::RbfArd: return "rbf-ard";
    case KernelKind::Sum: return lhs_->name() + "+" + rhs_->name();
  }
  return "?";
}

void Kernel::check_dims(Eigen::Index dx, Eigen::Index dy) const {
  if (dx != dy) throw std::invalid_argument("kernel input dimension mismatch");
  if (kind_ == KernelKind::RbfArd && lengthscales_.size() != dx) {
    throw std::invalid_argument("ARD lengthscale count does not match input dimension");
  }
}

Eigen::MatrixXd Kernel::apply(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
  switch (kind_) {
    case KernelKind::Sum:
      return lhs_->apply(X, Y) + rhs_->apply(X, Y);
    case KernelKind::Polynomial:
    case KernelKind::Linear: {
      const Eigen::ArrayXXd inner = (X * Y.transpose()).array() + offset_;
      Eigen::ArrayXXd out = inner;
      for (int d = 1; d < degree_; ++d) out *= inner;
      return variance_ * out.matrix();
    }
    case KernelKind::RbfArd: {
      const Eigen::RowVectorXd inv = lengthscales_.cwiseInverse().transpose();
      const Eigen::MatrixXd Xs = X.array().rowwise() * inv.array();
      const Eigen::MatrixXd Ys = Y.array().rowwise() * inv.array();
      return variance_ * (-0.5 * squared_distances(Xs, Ys).array()).exp().matrix();
    }
    default:
      break;
  }

  const double ell = lengthscales_[0];
  const Eigen::ArrayXXd d2 = squared_distances(X, Y).array();
  switch (kind_) {
    case KernelKind::Rbf:
      return variance_ * (-0.5 * d2 / (ell * ell)).exp().matrix();
    case KernelKind::Matern32: {
      const Eigen::ArrayXXd z = std::sqrt(3.0) * d2.sqrt() / ell;
      return variance_ * ((1.0 + z) * (-z).exp()).matrix();
    }
    case KernelKind::Matern52: {
      const Eigen::ArrayXXd z = std::sqrt(5.0) * d2.sqrt() / ell;
      return variance_ * ((1.0 + z + z.square() / 3.0) * (-z).exp()).matrix();
    }
    case KernelKind::Periodic: {
      // product of one-dimensional periodic kernels; sin^2 of the Euclidean
      // distance would not be positive definite for d > 1
      Eigen::ArrayXXd s2 = Eigen::ArrayXXd::Zero(X.rows(), Y.rows());
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const Eigen::ArrayXXd diff = X.col(c).replicate(1, Y.rows()).array() -
                                     Y.col(c).transpose().replicate(X.rows(), 1).array();
        s2 += (std::numbers::pi * diff / period_).sin().square();
      }
      return variance_ * (-2.0 * s2 / (ell * ell)).exp().matrix();
    }
    default:
      throw std::logic_error("unhandled kernel kind");
  }
}

double Kernel::operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  check_dims(x.size(), y.size());
  return apply(x.transpose(), y.transpose())(0, 0);
}

Eigen::MatrixXd Kernel::gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
  check_dims(X.cols(), Y.cols());
  return apply(X, Y);
}

Eigen::MatrixXd Kernel::gram(const Eigen::MatrixXd& X) const {
  check_dims(X.cols(), X.cols());
  Eigen::MatrixXd K = apply(X, X);
  // GEMM-based inner products are not guaranteed bit-symmetric.
  K = (0.5 * (K + K.transpose())).eval();
  return K;
}

Eigen::VectorXd Kernel::diagonal(const Eigen::MatrixXd& X) const {
  switch (kind_) {
    case KernelKind::Sum:
      return lhs_->diagonal(X) + rhs_->diagonal(X);
    case KernelKind::Polynomial:
    case KernelKind::Linear:
      return variance_ * (X.rowwise().squaredNorm().array() + offset_).pow(degree_).matrix();
    default:
      return Eigen::VectorXd::Constant(X.rows(), variance_);
  }
}

double Kernel::signal_variance() const {
  if (kind_ == KernelKind::Sum) return lhs_->signal_variance() + rhs_->signal_variance();
  return variance_;
}

Eigen::Index Kernel::num_params() const {
  switch (kind_) {
    case KernelKind::Sum: return lhs_->num_params() + rhs_->num_params();
    case KernelKind::Periodic: return 3;
    case KernelKind::RbfArd: return 1 + lengthscales_.size();
    default: return 2;
  }
}

Eigen::VectorXd Kernel::log_params() const {
  Eigen::VectorXd p(num_params());
  switch (kind_) {
    case KernelKind::Sum:
      p << lhs_->log_params(), rhs_->log_params();
      break;
    case KernelKind::Polynomial:
    case KernelKind::Linear:
      p << std::log(variance_), std::log(offset_);
      break;
    case KernelKind::Periodic:
      p << std::log(variance_), std::log(lengthscales_[0]), std::log(period_);
      break;
    case KernelKind::RbfArd:
      p << std::log(variance_), lengthscales_.array().log().matrix();
      break;
    default:
      p << std::log(variance_), std::log(lengthscales_[0]);
      break;
  }
  return p;
}

Kernel Kernel::with_log_params(const Eigen::VectorXd& p) const {
  if (p.size() != num_params()) throw std::invalid_argument("wrong hyperparameter count");
  switch (kind_) {
    case KernelKind::Sum: {
      const Eigen::Index nl = lhs_->num_params();
      return sum(lhs_->with_log_params(p.head(nl)), rhs_->with_log_params(p.tail(p.size() - nl)));
    }
    case KernelKind::Polynomial:
      return polynomial(std::exp(p[0]), degree_, std::exp(p[1]));
    case KernelKind::Linear:
      return linear(std::exp(p[0]), std::exp(p[1]));
    case KernelKind::Periodic:
      return periodic(std::exp(p[0]), std::exp(p[1]), std::exp(p[2]));
    case KernelKind::RbfArd:
      return rbf_ard(std::exp(p[0]), p.tail(p.size() - 1).array().exp().matrix());
    case KernelKind::Matern32:
      return matern32(std::exp(p[0]), std::exp(p[1]));
    case KernelKind::Matern52:
      return matern52(std::exp(p[0]), std::exp(p[1]));
    case KernelKind::Rbf:
      return rbf(std::exp(p[0]), std::exp(p[1]));
  }
  throw std::logic_error("unhandled kernel kind");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Kernel::log_bounds() const {
  const Eigen::Index n = num_params();
  Eigen::VectorXd lo(n), hi(n);
  if (kind_ == KernelKind::Sum) {
    auto [ll, lh] = lhs_->log_bounds();
    auto [rl, rh] = rhs_->log_bounds();
    lo << ll, rl;
    hi << lh, rh;
    return {lo, hi};
  }
  lo.fill(kMinLogLength);
  hi.fill(kMaxLogLength);
  lo[0] = kMinLogVariance;
  hi[0] = kMaxLogVariance;
  if (kind_ == KernelKind::Polynomial || kind_ == KernelKind::Linear) {
    lo[1] = std::log(1e-3);
  }
  if (kind_ == KernelKind::Periodic) {
    lo[2] = std::log(1e-1);
  }
  return {lo, hi};
}

}  // namespace gppcis
