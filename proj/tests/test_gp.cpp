#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gppcis/gp.hpp"
#include "oracles.hpp"

using namespace gppcis;

namespace {

Dataset make_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise) {
  Dataset d;
  d.inputs = X;
  d.targets = y;
  d.noise_variance = Eigen::VectorXd::Constant(1, noise);
  return d;
}

Eigen::VectorXd smooth(const Eigen::MatrixXd& X) {
  return (X.col(0).array().sin() + 0.5 * X.col(X.cols() - 1).array().square()).matrix();
}

double effective_noise(const GpPosterior& gp) { return gp.channel(0).noise_variance + gp.channel(0).jitter; }

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("empty data gives the prior") {
  Dataset d = make_data(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), 0.1);
  const Kernel k = Kernel::rbf(2.5, 1.0);
  const GpPosterior gp = fit(d, k);
  const Prediction p = predict(gp, Eigen::Vector2d(0.3, -1.0));
  CHECK(p.mean[0] == 0.0);
  CHECK(p.stddev[0] == doctest::Approx(std::sqrt(2.5)));
}

TEST_CASE("single noiseless point") {
  Eigen::MatrixXd X(1, 1);
  X << 0.0;
  Eigen::VectorXd y(1);
  y << 2.0;
  const GpPosterior gp = fit(make_data(X, y, 1e-12), Kernel::rbf(1.0, 1.0));
  const Prediction at0 = predict(gp, Eigen::VectorXd::Zero(1));
  CHECK(at0.mean[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(at0.stddev[0] <= 1e-3);
  const Prediction at1 = predict(gp, Eigen::VectorXd::Ones(1));
  const double expected = 2.0 * std::exp(-0.5) / (1.0 + effective_noise(gp));
  CHECK(at1.mean[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(at1.mean[0] == doctest::Approx(1.21306).epsilon(1e-5));
}

TEST_CASE("predictions match the dense-inverse oracle") {
  std::mt19937_64 rng(21);
  for (const Kernel& k : {Kernel::rbf(1.3, 0.8), Kernel::matern32(0.7, 1.2), Kernel::polynomial(0.5, 2)}) {
    const Eigen::MatrixXd X = oracle::uniform(rng, 40, 2, -2, 2);
    const Eigen::VectorXd y = smooth(X);
    const GpPosterior gp = fit(make_data(X, y, 0.01), k);
    const oracle::DenseGp ref(X, y, k, effective_noise(gp));
    const Eigen::MatrixXd Q = oracle::uniform(rng, 50, 2, -2.5, 2.5);
    const BatchPrediction p = predict(gp, Q);
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      const Eigen::VectorXd q = Q.row(i).transpose();
      CHECK(oracle::rel_err(p.mean(i, 0), ref.mean(q)) <= 1e-8);
      CHECK(oracle::rel_err(p.stddev(i, 0) * p.stddev(i, 0), std::max(0.0, ref.var(q))) <= 1e-8);
      const Prediction single = predict(gp, q);
      CHECK(single.mean[0] == doctest::Approx(p.mean(i, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("variance bounded by the prior and non-negative") {
  std::mt19937_64 rng(23);
  const Kernel k = Kernel::matern52(1.5, 0.6);
  const Eigen::MatrixXd X = oracle::uniform(rng, 25, 2, -1, 1);
  const GpPosterior gp = fit(make_data(X, smooth(X), 1e-4), k);
  const Eigen::MatrixXd Q = oracle::uniform(rng, 200, 2, -3, 3);
  const BatchPrediction p = predict(gp, Q);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    CHECK(p.stddev(i, 0) >= 0.0);
    CHECK(p.stddev(i, 0) * p.stddev(i, 0) <= 1.5 + 1e-9);
  }
}

TEST_CASE("log marginal likelihood") {
  Eigen::MatrixXd X(1, 1);
  X << 0.4;
  const GpPosterior gp = fit(make_data(X, Eigen::VectorXd::Zero(1), 1.0), Kernel::rbf(1.0, 1.0));
  const double expected = -0.5 * std::log(2.0) - 0.5 * std::log(2.0 * M_PI);
  CHECK(log_marginal_likelihood(gp)[0] == doctest::Approx(expected).epsilon(1e-8));
  CHECK(log_marginal_likelihood(gp)[0] == doctest::Approx(-1.26552).epsilon(1e-5));

  std::mt19937_64 rng(29);
  const Kernel k = Kernel::rbf(0.9, 0.7);
  const Eigen::MatrixXd Xr = oracle::uniform(rng, 30, 2, -2, 2);
  const Eigen::VectorXd yr = smooth(Xr);
  const GpPosterior g2 = fit(make_data(Xr, yr, 0.05), k);
  const oracle::DenseGp ref(Xr, yr, k, effective_noise(g2));
  CHECK(std::abs(log_marginal_likelihood(g2)[0] - ref.log_likelihood()) <= 1e-6 * std::abs(ref.log_likelihood()));
  CHECK(log_marginal_likelihood(Xr, yr, 0.05, k) == doctest::Approx(log_marginal_likelihood(g2)[0]).epsilon(1e-12));

  // row permutation
  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const GpPosterior g3 = fit(make_data(Xr, yr, 0.05).subset(perm), k);
  CHECK(std::abs(log_marginal_likelihood(g3)[0] - log_marginal_likelihood(g2)[0]) <= 1e-10);
}

TEST_CASE("duplicating a point follows the dense oracle") {
  std::mt19937_64 rng(31);
  const Kernel k = Kernel::rbf(1.0, 0.8);
  Eigen::MatrixXd X = oracle::uniform(rng, 10, 1, -2, 2);
  Eigen::VectorXd y = smooth(X);
  const GpPosterior before = fit(make_data(X, y, 1e-6), k);
  Eigen::MatrixXd X2(11, 1);
  X2 << X, X.row(3);
  Eigen::VectorXd y2(11);
  y2 << y, y[3];
  const GpPosterior after = fit(make_data(X2, y2, 1e-6), k);
  const double lb = oracle::DenseGp(X, y, k, effective_noise(before)).log_likelihood();
  const double la = oracle::DenseGp(X2, y2, k, effective_noise(after)).log_likelihood();
  CHECK(log_marginal_likelihood(before)[0] == doctest::Approx(lb).epsilon(1e-6));
  CHECK(log_marginal_likelihood(after)[0] == doctest::Approx(la).epsilon(1e-6));
  CHECK((la > lb) == (log_marginal_likelihood(after)[0] > log_marginal_likelihood(before)[0]));
}

TEST_CASE("update equals refit") {
  std::mt19937_64 rng(37);
  const Kernel k = Kernel::matern32(1.0, 0.9);
  const Eigen::MatrixXd X = oracle::uniform(rng, 30, 2, -2, 2);
  const Eigen::MatrixXd Xn = oracle::uniform(rng, 12, 2, -2, 2);
  const GpPosterior gp = fit(make_data(X, smooth(X), 0.01), k);
  const Eigen::MatrixXd Q = oracle::uniform(rng, 40, 2, -2, 2);

  const GpPosterior same = update(gp, Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 1));
  CHECK((predict(same, Q).mean - predict(gp, Q).mean).cwiseAbs().maxCoeff() == 0.0);

  const GpPosterior up = update(gp, Xn, smooth(Xn));
  Eigen::MatrixXd Xa(42, 2);
  Xa << X, Xn;
  const GpPosterior scratch = fit(make_data(Xa, smooth(Xa), 0.01), k);
  const BatchPrediction a = predict(up, Q), b = predict(scratch, Q);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.stddev - b.stddev).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("posterior variance never grows with data") {
  std::mt19937_64 rng(41);
  const std::vector<Kernel> kernels{Kernel::rbf(1.0, 0.7), Kernel::matern52(2.0, 1.3), Kernel::rbf_ard(0.8, Eigen::Vector2d(0.5, 1.5))};
  for (int t = 0; t < 100; ++t) {
    const Kernel& k = kernels[static_cast<std::size_t>(t) % kernels.size()];
    const Eigen::Index n = 1 + t % 25;
    const Eigen::MatrixXd X = oracle::uniform(rng, n, 2, -2, 2);
    const Eigen::MatrixXd extra = oracle::uniform(rng, 1, 2, -2, 2);
    const Eigen::MatrixXd Q = oracle::uniform(rng, 20, 2, -2.5, 2.5);
    const GpPosterior gp = fit(make_data(X, smooth(X), 0.01), k);
    const GpPosterior more = update(gp, extra, smooth(extra));
    const Eigen::MatrixXd before = predict(gp, Q).stddev, after = predict(more, Q).stddev;
    REQUIRE((after.array() <= before.array() + 1e-9).all());
  }
}

TEST_CASE("near-noiseless interpolation") {
  std::mt19937_64 rng(43);
  Eigen::MatrixXd X(12, 2);
  for (Eigen::Index i = 0; i < 12; ++i) X.row(i) << -2.0 + 0.35 * static_cast<double>(i), std::cos(1.3 * static_cast<double>(i));
  const Eigen::VectorXd y = smooth(X);
  const GpPosterior gp = fit(make_data(X, y, 1e-12), Kernel::rbf(1.0, 0.6));
  const BatchPrediction p = predict(gp, X);
  CHECK((p.mean.col(0) - y).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("degree-2 polynomial kernel recovers a quadratic") {
  std::mt19937_64 rng(47);
  const Eigen::MatrixXd X = oracle::uniform(rng, 300, 2, -5, 5);
  const Eigen::VectorXd y = X.col(1).array().square();
  const GpPosterior gp = fit(make_data(X, y, 1e-10), Kernel::polynomial(1.0, 2));
  const Eigen::MatrixXd T = oracle::uniform(rng, 200, 2, -5, 5);
  const Eigen::VectorXd truth = T.col(1).array().square();
  const Eigen::VectorXd mu = predict(gp, T).mean.col(0);
  const double rmse = std::sqrt((mu - truth).squaredNorm() / 200.0);
  CHECK(rmse < 1e-6);
}

TEST_CASE("hyperparameter fitting improves the likelihood") {
  std::mt19937_64 rng(53);
  const Eigen::MatrixXd X = oracle::uniform(rng, 60, 1, -3, 3);
  const Eigen::VectorXd y = (2.0 * X.col(0)).array().sin();
  const Kernel start = Kernel::rbf(0.05, 20.0);
  FitOptions opt;
  opt.restarts = 2;
  opt.max_evaluations = 200;
  const Kernel fitted = fit_hyperparameters(X, y, 1e-4, start, opt);
  CHECK(log_marginal_likelihood(X, y, 1e-4, fitted) > log_marginal_likelihood(X, y, 1e-4, start));
  const auto [lo, hi] = fitted.log_bounds();
  CHECK((fitted.log_params().array() >= lo.array() - 1e-12).all());
  CHECK((fitted.log_params().array() <= hi.array() + 1e-12).all());

  Dataset d = make_data(X, y, 1e-4);
  opt.fit_hyperparameters = true;
  const GpPosterior a = fit(d, start, opt), b = fit(d, start, opt);
  CHECK(a.channel(0).kernel.log_params() == b.channel(0).kernel.log_params());
}

TEST_CASE("jitter escalation and dataset validation") {
  Eigen::MatrixXd K = Eigen::MatrixXd::Ones(4, 4);  // rank one
  const auto [L, jitter] = jittered_cholesky(K, 0.0, 1.0);
  CHECK(jitter >= 1e-8);
  CHECK(jitter <= 1e-4);
  CHECK(((L * L.transpose()) - (K + jitter * Eigen::MatrixXd::Identity(4, 4))).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS(jittered_cholesky(bad, 0.0, 1.0));

  Dataset d = make_data(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2), 0.1);
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  Dataset z = make_data(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), 0.0);
  CHECK_THROWS_AS(z.validate(), std::invalid_argument);
}

TEST_CASE("multi-output channels are independent") {
  std::mt19937_64 rng(59);
  const Eigen::MatrixXd X = oracle::uniform(rng, 20, 2, -1, 1);
  Dataset d;
  d.inputs = X;
  d.targets.resize(20, 2);
  d.targets << smooth(X), X.col(0);
  d.noise_variance = Eigen::Vector2d(0.01, 0.001);
  const std::vector<Kernel> ks{Kernel::rbf(1.0, 0.5), Kernel::matern32(2.0, 1.0)};
  const GpPosterior joint = fit(d, ks);
  const GpPosterior second = fit(make_data(X, X.col(0), 0.001), ks[1]);
  const Eigen::MatrixXd Q = oracle::uniform(rng, 10, 2, -1, 1);
  CHECK((predict(joint, Q).mean.col(1) - predict(second, Q).mean.col(0)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("dataset CSV round trip") {
  std::mt19937_64 rng(61);
  Dataset d = make_data(oracle::uniform(rng, 5, 2, -1, 1), Eigen::VectorXd::LinSpaced(5, 0, 1), 0.2);
  std::stringstream s;
  write_dataset_csv(s, d);
  CHECK(s.str().rfind("x1,x2,y1\n", 0) == 0);
  const Dataset r = read_dataset_csv(s, 2, d.noise_variance);
  CHECK((r.inputs - d.inputs).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((r.targets - d.targets).cwiseAbs().maxCoeff() <= 1e-15);
}

}  // TEST_SUITE
