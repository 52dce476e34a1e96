#include "gppcis/gp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gppcis {

namespace {

constexpr double kMaxJitter = 1e-4;

// Bounded Nelder-Mead; points are clipped into [lo, hi] before evaluation.
template <typename F>
std::pair<Eigen::VectorXd, double> nelder_mead(F&& f, Eigen::VectorXd start, const Eigen::VectorXd& lo,
                                               const Eigen::VectorXd& hi, int max_evals) {
  const Eigen::Index n = start.size();
  auto clip = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd { return p.cwiseMax(lo).cwiseMin(hi); };
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& p) {
    ++evals;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };

  start = clip(start);
  simplex.push_back(start);
  values.push_back(eval(start));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = start;
    const double step = 0.5;
    p[i] = (p[i] + step <= hi[i]) ? p[i] + step : p[i] - step;
    p = clip(p);
    simplex.push_back(p);
    values.push_back(eval(p));
  }

  std::vector<std::size_t> order(simplex.size());
  while (evals < max_evals) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double size = 0.0;
    for (const auto& p : simplex) size = std::max(size, (p - simplex[best]).cwiseAbs().maxCoeff());
    if (size < 1e-6 && std::abs(values[worst] - values[best]) < 1e-9) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = clip(centroid + (centroid - simplex[worst]));
    const double fr = eval(reflected);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = clip(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd contracted =
        outside ? clip(centroid + 0.5 * (reflected - centroid)) : clip(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = clip(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
      values[i] = eval(simplex[i]);
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  return {simplex[static_cast<std::size_t>(it - values.begin())], *it};
}

std::vector<Eigen::Index> strided_rows(Eigen::Index n, Eigen::Index max_rows) {
  std::vector<Eigen::Index> rows;
  if (max_rows <= 0 || n <= max_rows) {
    rows.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    return rows;
  }
  for (Eigen::Index i = 0; i < max_rows; ++i) rows.push_back(i * n / max_rows);
  return rows;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.rows() != targets.rows()) throw std::invalid_argument("dataset row counts differ");
  if (noise_variance.size() != targets.cols()) {
    throw std::invalid_argument("one noise variance per output channel is required");
  }
  for (Eigen::Index i = 0; i < noise_variance.size(); ++i) {
    if (!(noise_variance[i] > 0.0)) throw std::invalid_argument("noise variance must be positive");
  }
}

void Dataset::append(const Eigen::MatrixXd& new_inputs, const Eigen::MatrixXd& new_targets) {
  if (new_inputs.rows() == 0) return;
  if (new_inputs.cols() != inputs.cols() || new_targets.cols() != targets.cols() ||
      new_inputs.rows() != new_targets.rows()) {
    throw std::invalid_argument("appended rows do not match dataset dimensions");
  }
  Eigen::MatrixXd x(inputs.rows() + new_inputs.rows(), inputs.cols());
  Eigen::MatrixXd y(targets.rows() + new_targets.rows(), targets.cols());
  x << inputs, new_inputs;
  y << targets, new_targets;
  inputs = std::move(x);
  targets = std::move(y);
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(rows[i]);
  }
  out.noise_variance = noise_variance;
  return out;
}

std::pair<Eigen::MatrixXd, double> jittered_cholesky(const Eigen::MatrixXd& K, double added_diagonal,
                                                     double signal_variance, double base_jitter) {
  const Eigen::Index n = K.rows();
  if (!(base_jitter > 0.0)) throw std::invalid_argument("base jitter must be positive");
  // a positive noise diagonal usually suffices on its own; only escalate when it does not
  for (double rel = added_diagonal > 0.0 ? 0.0 : base_jitter; rel <= kMaxJitter * 1.0000001;
       rel = rel == 0.0 ? base_jitter : 10.0 * rel) {
    const double jitter = rel * signal_variance;
    Eigen::MatrixXd A = K;
    A.diagonal().array() += added_diagonal + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd L = llt.matrixL();
      if (n == 0 || L.diagonal().minCoeff() > 0.0) return {std::move(L), jitter};
    }
  }
  throw std::runtime_error("Gram matrix factorisation failed after jitter escalation");
}

double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               double noise_variance, const Kernel& kernel, double prior_mean) {
  const Eigen::Index n = inputs.rows();
  if (n == 0) return 0.0;
  // same factorisation as fit() so the optimum is the posterior that gets built
  Eigen::MatrixXd L;
  try {
    L = jittered_cholesky(kernel.gram(inputs), noise_variance, kernel.signal_variance()).first;
  } catch (const std::runtime_error&) {
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd r = targets.array() - prior_mean;
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(r);
  const Eigen::VectorXd alpha = L.transpose().triangularView<Eigen::Upper>().solve(z);
  const double logdet = L.diagonal().array().log().sum();
  return -0.5 * r.dot(alpha) - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

Kernel fit_hyperparameters(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           double noise_variance, const Kernel& initial, const FitOptions& options) {
  const auto rows = strided_rows(inputs.rows(), options.max_fit_points);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
    y[static_cast<Eigen::Index>(i)] = targets[rows[i]];
  }
  if (X.rows() == 0) return initial;

  const auto [lo, hi] = initial.log_bounds();
  auto objective = [&](const Eigen::VectorXd& p) {
    return -log_marginal_likelihood(X, y, noise_variance, initial.with_log_params(p), options.prior_mean);
  };

  std::mt19937_64 rng(options.seed);
  Eigen::VectorXd best = initial.log_params().cwiseMax(lo).cwiseMin(hi);
  double best_value = objective(best);
  for (int r = 0; r <= options.restarts; ++r) {
    Eigen::VectorXd start = best;
    if (r > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) {
        std::uniform_real_distribution<double> u(lo[i], hi[i]);
        start[i] = u(rng);
      }
    }
    auto [p, value] = nelder_mead(objective, start, lo, hi, options.max_evaluations);
    if (value < best_value) {
      best = p;
      best_value = value;
    }
  }
  return initial.with_log_params(best);
}

GpPosterior fit(const Dataset& data, const Kernel& kernel, const FitOptions& options) {
  return fit(data, std::vector<Kernel>(static_cast<std::size_t>(data.output_dim()), kernel), options);
}

GpPosterior fit(const Dataset& data, const std::vector<Kernel>& kernels, const FitOptions& options) {
  data.validate();
  if (static_cast<Eigen::Index>(kernels.size()) != data.output_dim()) {
    throw std::invalid_argument("one kernel per output channel is required");
  }
  GpPosterior post;
  post.input_dim_ = data.input_dim();
  post.prior_mean_ = options.prior_mean;
  post.inputs_ = data.inputs;
  post.targets_ = data.targets;
  for (Eigen::Index c = 0; c < data.output_dim(); ++c) {
    GpPosterior::Channel ch;
    ch.noise_variance = data.noise_variance[c];
    ch.kernel = kernels[static_cast<std::size_t>(c)];
    if (options.fit_hyperparameters && data.size() > 0) {
      FitOptions per_channel = options;
      per_channel.seed = options.seed + static_cast<std::uint64_t>(c);
      ch.kernel = fit_hyperparameters(data.inputs, data.targets.col(c), ch.noise_variance, ch.kernel, per_channel);
    }
    if (data.size() > 0) {
      auto [L, jitter] = jittered_cholesky(ch.kernel.gram(data.inputs), ch.noise_variance,
                                           ch.kernel.signal_variance());
      ch.chol_lower = std::move(L);
      ch.jitter = jitter;
      const Eigen::VectorXd r = data.targets.col(c).array() - options.prior_mean;
      const Eigen::VectorXd z = ch.chol_lower.triangularView<Eigen::Lower>().solve(r);
      ch.alpha = ch.chol_lower.transpose().triangularView<Eigen::Upper>().solve(z);
    }
    post.channels_.push_back(std::move(ch));
  }
  return post;
}

Dataset GpPosterior::dataset() const {
  Dataset d;
  d.inputs = inputs_;
  d.targets = targets_;
  d.noise_variance.resize(output_dim());
  for (Eigen::Index c = 0; c < output_dim(); ++c) d.noise_variance[c] = channel(c).noise_variance;
  return d;
}

BatchPrediction predict(const GpPosterior& posterior, const Eigen::MatrixXd& X) {
  const Eigen::Index m = X.rows();
  const Eigen::Index q = posterior.output_dim();
  if (X.cols() != posterior.input_dim()) throw std::invalid_argument("query dimension mismatch");
  BatchPrediction out{Eigen::MatrixXd(m, q), Eigen::MatrixXd(m, q)};
  for (Eigen::Index c = 0; c < q; ++c) {
    const auto& ch = posterior.channel(c);
    const Eigen::VectorXd prior_var = ch.kernel.diagonal(X);
    if (posterior.size() == 0) {
      out.mean.col(c).setConstant(posterior.prior_mean());
      out.stddev.col(c) = prior_var.cwiseMax(0.0).cwiseSqrt();
      continue;
    }
    Eigen::MatrixXd Ks = ch.kernel.gram(posterior.inputs(), X);  // n x m
    out.mean.col(c) = (Ks.transpose() * ch.alpha).array() + posterior.prior_mean();
    ch.chol_lower.triangularView<Eigen::Lower>().solveInPlace(Ks);
    const Eigen::VectorXd var = prior_var - Ks.colwise().squaredNorm().transpose();
    out.stddev.col(c) = var.cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

Prediction predict(const GpPosterior& posterior, const Eigen::VectorXd& x) {
  const BatchPrediction b = predict(posterior, Eigen::MatrixXd(x.transpose()));
  return {b.mean.row(0).transpose(), b.stddev.row(0).transpose()};
}

Eigen::VectorXd log_marginal_likelihood(const GpPosterior& posterior) {
  const Eigen::Index q = posterior.output_dim();
  const double n = static_cast<double>(posterior.size());
  Eigen::VectorXd ll(q);
  for (Eigen::Index c = 0; c < q; ++c) {
    const auto& ch = posterior.channel(c);
    if (posterior.size() == 0) {
      ll[c] = 0.0;
      continue;
    }
    const Eigen::VectorXd r = posterior.targets().col(c).array() - posterior.prior_mean();
    ll[c] = -0.5 * r.dot(ch.alpha) - ch.chol_lower.diagonal().array().log().sum() -
            0.5 * n * std::log(2.0 * std::numbers::pi);
  }
  return ll;
}

GpPosterior update(const GpPosterior& posterior, const Eigen::MatrixXd& new_inputs,
                   const Eigen::MatrixXd& new_targets) {
  if (new_inputs.rows() == 0) return posterior;
  Dataset d = posterior.dataset();
  if (d.inputs.cols() == 0) d.inputs.resize(0, new_inputs.cols());
  d.append(new_inputs, new_targets);
  std::vector<Kernel> kernels;
  for (Eigen::Index c = 0; c < posterior.output_dim(); ++c) kernels.push_back(posterior.channel(c).kernel);
  FitOptions opts;
  opts.prior_mean = posterior.prior_mean();
  return fit(d, kernels, opts);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (Eigen::Index j = 0; j < data.input_dim(); ++j) out << (j ? "," : "") << "x" << j + 1;
  for (Eigen::Index j = 0; j < data.output_dim(); ++j) out << ",y" << j + 1;
  out << "\n";
  const auto old = out.precision(17);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.input_dim(); ++j) out << (j ? "," : "") << data.inputs(i, j);
    for (Eigen::Index j = 0; j < data.output_dim(); ++j) out << "," << data.targets(i, j);
    out << "\n";
  }
  out.precision(old);
}

Dataset read_dataset_csv(std::istream& in, Eigen::Index input_dim, const Eigen::VectorXd& noise_variance) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV is empty");
  const Eigen::Index cols = input_dim + noise_variance.size();
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index count = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (count != cols) throw std::runtime_error("dataset CSV row has wrong column count");
    ++rows;
  }
  Dataset d;
  d.inputs.resize(rows, input_dim);
  d.targets.resize(rows, noise_variance.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = values[static_cast<std::size_t>(i * cols + j)];
      if (j < input_dim) d.inputs(i, j) = v;
      else d.targets(i, j - input_dim) = v;
    }
  }
  d.noise_variance = noise_variance;
  d.validate();
  return d;
}

}  // namespace gppcis
