#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gppcis/control.hpp"
#include "gppcis/pcis.hpp"
#include "gppcis/plants.hpp"
#include "oracles.hpp"

using namespace gppcis;

namespace {

struct Setup {
  PolynomialPlant plant;
  LinearModel model;
  Clf clf;
  PcisPredicate pred;

  Setup() {
    model = linearize(plant, Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1));
    clf = lqr(model, 0.1 * Eigen::MatrixXd::Identity(2, 2), 0.1 * Eigen::MatrixXd::Identity(1, 1));
    pred.A = model.A;
    pred.B = model.B;
    pred.P = clf.P;
    pred.beta = 2.0;
    pred.lambda = clf.decay;
    pred.state_box = Box::uniform(2, -5.0, 5.0);
    pred.input_box = Box::uniform(1, -10.0, 10.0);
  }
};

Prediction residual_with(const Eigen::VectorXd& x, double sigma) {
  return {PolynomialPlant::residual(x), Eigen::Vector2d(0.0, sigma * (1.0 + std::abs(x[0])))};
}

}  // namespace

TEST_SUITE("pcis") {

TEST_CASE("origin is a member of the nominal condition") {
  Setup s;
  const Membership m = is_member(s.pred, Eigen::Vector2d::Zero());
  CHECK(m.member);
  REQUIRE(m.witness.size() == 1);
  CHECK(m.witness[0] == 0.0);
  CHECK_FALSE(is_member(s.pred, Eigen::Vector2d(6.0, 0.0)).member);
}

TEST_CASE("membership is the minimum over a dense input grid") {
  Setup s;
  std::mt19937_64 rng(151);
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd x = oracle::uniform(rng, 2, 1, -5, 5);
    const Prediction r = residual_with(x, 0.3);
    const Membership m = is_member(s.pred, x, r);
    const ClfConstraint c = clf_constraint(s.pred, x, r);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 400; ++k) {
      const double u = -10.0 + 20.0 * k / 400.0;
      best = std::min(best, c.a[0] * u + c.b);
    }
    CHECK(m.value == doctest::Approx(best).epsilon(1e-12));
    CHECK(m.member == (best <= 0.0));
  }
}

TEST_CASE("inflating sigma never creates members") {
  Setup s;
  std::mt19937_64 rng(157);
  std::uniform_real_distribution<double> U(1.0, 4.0);
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd x = oracle::uniform(rng, 2, 1, -5, 5);
    const Prediction r = residual_with(x, 0.2);
    Prediction big = r;
    big.stddev *= U(rng);
    if (!is_member(s.pred, x, r).member) CHECK_FALSE(is_member(s.pred, x, big).member);
    CHECK(is_member(s.pred, x, big).value >= is_member(s.pred, x, r).value);
  }
}

TEST_CASE("zero-margin member flips when sigma doubles") {
  Setup s;
  const Eigen::Vector2d x(1.0, 0.5);
  const Prediction r = residual_with(x, 0.2);
  s.pred.margin = 0.0;
  s.pred.margin = -is_member(s.pred, x, r).value;
  const Membership edge = is_member(s.pred, x, r);
  CHECK(std::abs(edge.value) <= 1e-9);
  Prediction doubled = r;
  doubled.stddev *= 2.0;
  CHECK(is_member(s.pred, x, doubled).value > 0.0);
  CHECK_FALSE(is_member(s.pred, x, doubled).member);
}

TEST_CASE("exact residual reproduces the true nonlinear condition") {
  Setup s;
  s.pred.residual = [](const Eigen::VectorXd& x) { return Prediction{PolynomialPlant::residual(x), Eigen::Vector2d::Zero()}; };
  GridSpec grid{Box::uniform(2, -5.0, 5.0), {81, 81}};
  const CertifiedSet set = certify_grid(s.pred, grid);
  Eigen::Index brute = 0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.node(i);
    const Eigen::VectorXd g = s.clf.gradient(x);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 200; ++k) {
      const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, -10.0 + 20.0 * k / 200.0);
      best = std::min(best, g.dot(s.plant.deriv(x, u)) + s.pred.lambda * s.clf.value(x));
    }
    brute += best <= 0.0;
  }
  CHECK(std::abs(static_cast<double>(set.count - brute)) <= 0.02 * static_cast<double>(grid.size()));
}

TEST_CASE("certified sets") {
  Setup s;
  s.pred.residual = [](const Eigen::VectorXd& x) { return residual_with(x, 0.1); };
  GridSpec grid{Box::uniform(2, -5.0, 5.0), {41, 41}};
  const CertifiedSet a = certify_grid(s.pred, grid), b = certify_grid(s.pred, grid);
  CHECK(a.members == b.members);
  CHECK(a.count == std::accumulate(a.members.begin(), a.members.end(), Eigen::Index{0}));
  CHECK(a.count > 0);
  const Eigen::MatrixXd pts = a.member_points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) CHECK(s.pred.state_box.contains(pts.row(i).transpose()));

  // batch query gives the same bitmap as the pointwise one
  const CertifiedSet c = certify_grid(s.pred, grid, [](const Eigen::MatrixXd& X) {
    BatchPrediction p{Eigen::MatrixXd(X.rows(), 2), Eigen::MatrixXd(X.rows(), 2)};
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Prediction r = residual_with(X.row(i).transpose(), 0.1);
      p.mean.row(i) = r.mean.transpose();
      p.stddev.row(i) = r.stddev.transpose();
    }
    return p;
  });
  CHECK(c.members == a.members);

  // smaller sigma never shrinks the set
  Eigen::Index prev = 0;
  for (double sigma : {0.4, 0.2, 0.1, 0.05, 0.0}) {
    s.pred.residual = [sigma](const Eigen::VectorXd& x) { return residual_with(x, sigma); };
    const Eigen::Index n = certify_grid(s.pred, grid).count;
    CHECK(n >= prev);
    prev = n;
  }

  PcisPredicate empty = s.pred;
  empty.input_box = Box{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
  CHECK(certify_grid(empty, grid).count == 0);
  CHECK_THROWS(certify_grid(s.pred, GridSpec{grid.box, {19, 41}}));
  CHECK_THROWS(certify_grid(s.pred, GridSpec{grid.box, {4000, 4000}}));
}

TEST_CASE("largest level set inside a box") {
  CHECK(max_level_set(Eigen::Matrix2d::Identity(), Box::uniform(2, -1, 1)) == doctest::Approx(1.0));
  Eigen::Matrix2d P;
  P << 1, 0, 0, 4;
  CHECK(max_level_set(P, Box::uniform(2, -1, 1)) == doctest::Approx(1.0));
  CHECK_THROWS(max_level_set(P, Box::uniform(2, 0.5, 1)));

  std::mt19937_64 rng(163);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    const Eigen::MatrixXd G = oracle::uniform(rng, 3, 3, -1, 1);
    const Eigen::MatrixXd Pr = G * G.transpose() + 0.2 * Eigen::MatrixXd::Identity(3, 3);
    const Box box{Eigen::Vector3d(-1.0, -0.5, -2.0), Eigen::Vector3d(0.7, 1.5, 0.4)};
    const double alpha = max_level_set(Pr, box);
    // sample the ellipsoid surface {x^T P x = alpha}
    const Eigen::MatrixXd L = Pr.llt().matrixL();
    int outside = 0;
    for (int k = 0; k < 100000; ++k) {
      Eigen::Vector3d z(N(rng), N(rng), N(rng));
      z *= std::sqrt(alpha) / z.norm();
      const Eigen::VectorXd x = L.transpose().triangularView<Eigen::Upper>().solve(z);
      outside += !box.contains(x, 1e-12);
    }
    CHECK(outside == 0);
  }
}

TEST_CASE("discretisation allowance from a pilot") {
  Setup s;
  std::mt19937_64 rng(167);
  const Eigen::MatrixXd X = oracle::uniform(rng, 50, 2, -1, 1);
  const Eigen::MatrixXd U = oracle::uniform(rng, 50, 1, -2, 2);
  const double eta = estimate_eta(s.plant, s.model, s.clf, X, U, 0.0, 2.0);
  CHECK(eta > 0.0);
  CHECK(estimate_eta(s.plant, s.model, s.clf, X, U, 0.0, 4.0) == doctest::Approx(2.0 * eta));
}

TEST_CASE("grid nodes and summaries") {
  GridSpec g{Box{Eigen::Vector2d(0, 10), Eigen::Vector2d(1, 20)}, {21, 31}};
  CHECK(g.size() == 651);
  CHECK(g.node(0) == Eigen::Vector2d(0, 10));
  CHECK(g.node(650) == Eigen::Vector2d(1, 20));
  CHECK(g.node(1)[1] == doctest::Approx(10.0 + 10.0 / 30.0));
  CertifiedSet set;
  set.grid = g;
  set.members.assign(651, 0);
  set.members[0] = set.members[650] = 1;
  set.count = 2;
  const CertifiedSummary sum = summarize(set, Eigen::Vector2d(1, 1));
  CHECK(sum.lower == Eigen::Vector2d(1, 11));
  CHECK(sum.upper == Eigen::Vector2d(2, 21));
}

}  // TEST_SUITE
