#include "gppcis/sparse_gp.hpp"

#include <limits>
#include <random>
#include <stdexcept>

namespace gppcis {

std::vector<Eigen::Index> farthest_point_indices(const Eigen::MatrixXd& X, Eigen::Index count, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  if (count < 1 || count > n) throw std::invalid_argument("inducing count must lie in [1, n]");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> chosen{pick(rng)};
  Eigen::VectorXd dist = (X.rowwise() - X.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(chosen.size()) < count) {
    Eigen::Index next = 0;
    dist.maxCoeff(&next);
    chosen.push_back(next);
    dist = dist.cwiseMin((X.rowwise() - X.row(next)).rowwise().squaredNorm());
  }
  return chosen;
}

SparsePosterior fit_sparse(const Dataset& data, const std::vector<Kernel>& kernels, const Eigen::MatrixXd& Z,
                           double prior_mean) {
  data.validate();
  const Eigen::Index n = data.size();
  const Eigen::Index M = Z.rows();
  if (M < 1 || M > n) throw std::invalid_argument("inducing count must lie in [1, n]");
  if (Z.cols() != data.input_dim()) throw std::invalid_argument("inducing inputs have wrong dimension");
  if (static_cast<Eigen::Index>(kernels.size()) != data.output_dim()) {
    throw std::invalid_argument("one kernel per output channel is required");
  }

  SparsePosterior post;
  post.prior_mean_ = prior_mean;
  post.inducing_ = Z;
  for (Eigen::Index c = 0; c < data.output_dim(); ++c) {
    SparsePosterior::Channel ch;
    ch.kernel = kernels[static_cast<std::size_t>(c)];
    ch.noise_variance = data.noise_variance[c];
    // K_uu alone has no noise on its diagonal; keep the jitter as small as
    // the factorisation allows so that Z = X stays close to the exact GP.
    ch.chol_mm = jittered_cholesky(ch.kernel.gram(Z), 0.0, ch.kernel.signal_variance(), 1e-12).first;

    Eigen::MatrixXd V = ch.kernel.gram(Z, data.inputs);
    ch.chol_mm.triangularView<Eigen::Lower>().solveInPlace(V);
    ch.fitc_diagonal = (ch.kernel.diagonal(data.inputs) - V.colwise().squaredNorm().transpose()).cwiseMax(0.0);
    const Eigen::VectorXd lambda_inv = (ch.fitc_diagonal.array() + ch.noise_variance).inverse();

    const Eigen::MatrixXd VL = V * lambda_inv.asDiagonal();
    Eigen::MatrixXd A = VL * V.transpose();
    A = (0.5 * (A + A.transpose())).eval();
    A.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw std::runtime_error("FITC inner matrix is not positive definite");
    ch.chol_a = llt.matrixL();

    const Eigen::VectorXd r = data.targets.col(c).array() - prior_mean;
    ch.weights = llt.solve(VL * r);
    post.channels_.push_back(std::move(ch));
  }
  return post;
}

SparsePosterior fit_sparse(const Dataset& data, const std::vector<Kernel>& kernels, Eigen::Index num_inducing,
                           std::uint64_t seed, double prior_mean) {
  const auto rows = farthest_point_indices(data.inputs, num_inducing, seed);
  Eigen::MatrixXd Z(num_inducing, data.input_dim());
  for (Eigen::Index i = 0; i < num_inducing; ++i) Z.row(i) = data.inputs.row(rows[static_cast<std::size_t>(i)]);
  return fit_sparse(data, kernels, Z, prior_mean);
}

SparsePosterior fit_sparse(const Dataset& data, const Kernel& kernel, Eigen::Index num_inducing, std::uint64_t seed,
                           double prior_mean) {
  return fit_sparse(data, std::vector<Kernel>(static_cast<std::size_t>(data.output_dim()), kernel), num_inducing,
                    seed, prior_mean);
}

BatchPrediction predict(const SparsePosterior& posterior, const Eigen::MatrixXd& X) {
  if (X.cols() != posterior.input_dim()) throw std::invalid_argument("query dimension mismatch");
  const Eigen::Index m = X.rows();
  BatchPrediction out{Eigen::MatrixXd(m, posterior.output_dim()), Eigen::MatrixXd(m, posterior.output_dim())};
  for (Eigen::Index c = 0; c < posterior.output_dim(); ++c) {
    const auto& ch = posterior.channel(c);
    Eigen::MatrixXd Vs = ch.kernel.gram(posterior.inducing(), X);
    ch.chol_mm.triangularView<Eigen::Lower>().solveInPlace(Vs);
    out.mean.col(c) = (Vs.transpose() * ch.weights).array() + posterior.prior_mean();
    Eigen::VectorXd var = ch.kernel.diagonal(X) - Vs.colwise().squaredNorm().transpose();
    ch.chol_a.triangularView<Eigen::Lower>().solveInPlace(Vs);
    var += Vs.colwise().squaredNorm().transpose();
    out.stddev.col(c) = var.cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

Prediction predict(const SparsePosterior& posterior, const Eigen::VectorXd& x) {
  const BatchPrediction b = predict(posterior, Eigen::MatrixXd(x.transpose()));
  return {b.mean.row(0).transpose(), b.stddev.row(0).transpose()};
}

}  // namespace gppcis
