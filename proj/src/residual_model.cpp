#include "gppcis/residual_model.hpp"

#include <cmath>
#include <stdexcept>

namespace gppcis {

ResidualModel ResidualModel::build(const Dataset& data, const std::vector<Kernel>& kernels,
                                   const ResidualModelOptions& options, const FitOptions& fit_options) {
  data.validate();
  const Eigen::Index nx = data.input_dim();
  const auto q = static_cast<Eigen::Index>(options.learned_channels.size());
  if (data.output_dim() != nx) throw std::invalid_argument("residual targets must cover the full state");
  if (static_cast<Eigen::Index>(kernels.size()) != q) throw std::invalid_argument("one kernel per learned channel");
  if (options.input_scale.size() != nx || options.output_scale.size() != q) {
    throw std::invalid_argument("scale vectors do not match the model dimensions");
  }

  ResidualModel model;
  model.state_dim_ = nx;
  model.training_size_ = data.size();
  model.options_ = options;
  model.noise_variance_ = Eigen::VectorXd::Zero(nx);

  Dataset scaled;
  scaled.inputs = data.inputs * options.input_scale.cwiseInverse().asDiagonal();
  scaled.targets.resize(data.size(), q);
  scaled.noise_variance.resize(q);
  for (Eigen::Index c = 0; c < q; ++c) {
    const Eigen::Index ch = options.learned_channels[static_cast<std::size_t>(c)];
    scaled.targets.col(c) = data.targets.col(ch) / options.output_scale[c];
    scaled.noise_variance[c] = data.noise_variance[ch] / (options.output_scale[c] * options.output_scale[c]);
    model.noise_variance_[ch] = data.noise_variance[ch];
  }

  model.kernels_ = kernels;
  if (fit_options.fit_hyperparameters && data.size() > 0) {
    for (Eigen::Index c = 0; c < q; ++c) {
      FitOptions per = fit_options;
      per.seed = fit_options.seed + static_cast<std::uint64_t>(c);
      model.kernels_[static_cast<std::size_t>(c)] =
          fit_hyperparameters(scaled.inputs, scaled.targets.col(c), scaled.noise_variance[c],
                              kernels[static_cast<std::size_t>(c)], per);
    }
  }

  if (options.sparse && data.size() > options.inducing) {
    model.sparse_ = fit_sparse(scaled, model.kernels_, options.inducing, options.inducing_seed);
  } else {
    FitOptions plain;
    plain.prior_mean = 0.0;
    model.exact_ = fit(scaled, model.kernels_, plain);
  }
  return model;
}

ResidualModel ResidualModel::with_gamma(double gamma) const {
  if (!(gamma >= 1.0)) throw std::invalid_argument("calibration factor must be >= 1");
  ResidualModel copy = *this;
  copy.gamma_ = gamma;
  return copy;
}

BatchPrediction ResidualModel::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != state_dim_) throw std::invalid_argument("query dimension mismatch");
  const Eigen::MatrixXd Xs = X * options_.input_scale.cwiseInverse().asDiagonal();
  const BatchPrediction scaled = sparse_ ? gppcis::predict(*sparse_, Xs) : gppcis::predict(*exact_, Xs);
  BatchPrediction out{Eigen::MatrixXd::Zero(X.rows(), state_dim_), Eigen::MatrixXd::Zero(X.rows(), state_dim_)};
  for (std::size_t c = 0; c < options_.learned_channels.size(); ++c) {
    const Eigen::Index ch = options_.learned_channels[c];
    const double s = options_.output_scale[static_cast<Eigen::Index>(c)];
    out.mean.col(ch) = s * scaled.mean.col(static_cast<Eigen::Index>(c));
    out.stddev.col(ch) = s * scaled.stddev.col(static_cast<Eigen::Index>(c));
  }
  return out;
}

Prediction ResidualModel::predict(const Eigen::VectorXd& x) const {
  const BatchPrediction b = predict(Eigen::MatrixXd(x.transpose()));
  return {b.mean.row(0).transpose(), b.stddev.row(0).transpose()};
}

BatchPrediction ResidualModel::predict_calibrated(const Eigen::MatrixXd& X) const {
  BatchPrediction b = predict(X);
  b.stddev *= std::sqrt(gamma_);
  return b;
}

Prediction ResidualModel::predict_calibrated(const Eigen::VectorXd& x) const {
  Prediction p = predict(x);
  p.stddev *= std::sqrt(gamma_);
  return p;
}

}  // namespace gppcis
