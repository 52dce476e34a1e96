#include <doctest.h>

#include <random>

#include "gppcis/control.hpp"
#include "gppcis/plants.hpp"
#include "gppcis/safe_qp.hpp"
#include "oracles.hpp"

using namespace gppcis;

namespace {

QpProblem scalar(double rho) {
  QpProblem p;
  p.u_lin = Eigen::VectorXd::Zero(1);
  p.R_s = Eigen::MatrixXd::Identity(1, 1);
  p.rho = rho;
  p.a = Eigen::VectorXd::Ones(1);
  p.b = 1.0;
  p.u_min = Eigen::VectorXd::Constant(1, -5.0);
  p.u_max = Eigen::VectorXd::Constant(1, 5.0);
  return p;
}

PcisPredicate poly_predicate(double beta) {
  const PolynomialPlant plant;
  const LinearModel m = linearize(plant, Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1));
  const Clf c = lqr(m, 0.1 * Eigen::MatrixXd::Identity(2, 2), 0.1 * Eigen::MatrixXd::Identity(1, 1));
  PcisPredicate p;
  p.A = m.A;
  p.B = m.B;
  p.P = c.P;
  p.beta = beta;
  p.lambda = c.decay;
  p.state_box = Box::uniform(2, -5, 5);
  p.input_box = Box::uniform(1, -10, 10);
  return p;
}

}  // namespace

TEST_SUITE("safe_qp") {

TEST_CASE("hand-solved scalar problems") {
  const QpSolution a = solve_qp(scalar(10.0));
  CHECK(a.u[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a.s == doctest::Approx(0.0));
  CHECK(a.objective == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.kkt_residual <= 1e-8);

  const QpSolution b = solve_qp(scalar(1.0));
  CHECK(b.u[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(b.s == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b.objective == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(b.kkt_residual <= 1e-8);

  for (double rho : {10.0, 1.0}) {
    CHECK(solve_qp(scalar(rho)).objective <= oracle::qp_grid_optimum(scalar(rho)) + 1e-4);
  }
}

TEST_CASE("inactive constraint leaves u_lin untouched") {
  QpProblem p = scalar(10.0);
  p.b = -3.0;
  p.u_lin[0] = 1.7;
  const QpSolution s = solve_qp(p);
  CHECK(s.u[0] == 1.7);
  CHECK(s.s == 0.0);
}

TEST_CASE("random problems against grid search") {
  std::mt19937_64 rng(181);
  for (int t = 0; t < 40; ++t) {
    const Eigen::Index m = 1 + t % 2;
    const QpProblem p = oracle::random_qp(rng, m);
    const QpSolution s = solve_qp(p);
    CHECK(s.objective <= oracle::qp_grid_optimum(p) + 1e-4);
    CHECK(s.kkt_residual <= 1e-8);
    CHECK(kkt_residual(p, s.u, s.s) <= 1e-8);
    CHECK(s.s >= 0.0);
    CHECK(p.a.dot(s.u) + p.b <= s.s + 1e-12);
    CHECK((s.u.array() >= p.u_min.array()).all());
    CHECK((s.u.array() <= p.u_max.array()).all());
    CHECK(qp_objective(p, s.u, s.s) == doctest::Approx(s.objective).epsilon(1e-12));
    // deterministic
    CHECK(solve_qp(p).u == s.u);
  }
}

TEST_CASE("filter transparency") {
  std::mt19937_64 rng(191);
  int hits = 0;
  for (int t = 0; t < 2000 && hits < 100; ++t) {
    QpProblem p = oracle::random_qp(rng, 1 + t % 3);
    p.linear.resize(0);
    p.u_lin = p.u_min + (p.u_max - p.u_min).cwiseProduct(oracle::uniform(rng, p.u_lin.size(), 1, 0, 1));
    if (p.a.dot(p.u_lin) + p.b > 0.0) continue;
    ++hits;
    const QpSolution s = solve_qp(p);
    CHECK(s.u == p.u_lin);
    CHECK(s.s == 0.0);
  }
  CHECK(hits == 100);
}

TEST_CASE("larger beta never lowers the slack") {
  std::mt19937_64 rng(193);
  FilterSettings fs;
  fs.rho = 5.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = oracle::uniform(rng, 2, 1, -4, 4);
    const Eigen::VectorXd u_lin = oracle::uniform(rng, 1, 1, -10, 10);
    const Prediction r{PolynomialPlant::residual(x), Eigen::Vector2d(0.0, 0.5)};
    double prev = -1.0;
    for (double beta : {0.0, 1.0, 2.0, 4.0, 8.0}) {
      const double s = safe_step(poly_predicate(beta), x, u_lin, r, fs).s;
      CHECK(s >= prev - 1e-12);
      prev = s;
    }
  }
}

TEST_CASE("constraint row from the predicate") {
  PcisPredicate pred = poly_predicate(2.0);
  const Prediction zero{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  const QpProblem at0 = build_qp(pred, Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1), zero, {});
  CHECK(at0.a[0] == 0.0);
  CHECK(at0.b == 0.0);
  CHECK(at0.rho == doctest::Approx(1e3));

  const Eigen::Vector2d x(0.0, 1.0);
  const QpProblem p = build_qp(pred, x, Eigen::VectorXd::Zero(1), zero, {});
  const Eigen::Matrix2d& P = pred.P;
  CHECK(p.a[0] == doctest::Approx(2.0 * P(1, 1)).epsilon(1e-14));
  // grad V = 2 P[:,2], A x = (1, -2)
  const double b = 2.0 * (P(0, 1) * 1.0 + P(1, 1) * -2.0) + pred.lambda * P(1, 1);
  CHECK(p.b == doctest::Approx(b).epsilon(1e-14));

  // inflating sigma strictly raises b
  const Prediction r{Eigen::Vector2d::Zero(), Eigen::Vector2d(0.1, 0.1)};
  Prediction inflated = r;
  inflated.stddev *= std::sqrt(1.5);
  CHECK(build_qp(pred, x, Eigen::VectorXd::Zero(1), inflated, {}).b > build_qp(pred, x, Eigen::VectorXd::Zero(1), r, {}).b);

  // exploration weight enters as a constant linear term
  FilterSettings fs;
  fs.explore_weight = 1.0;
  fs.explore_direction = Eigen::Vector2d(0.0, 1.0);
  const QpProblem e = build_qp(pred, x, Eigen::VectorXd::Zero(1), r, fs);
  REQUIRE(e.linear.size() == 1);
  CHECK(e.linear[0] == doctest::Approx(-0.1));
}

TEST_CASE("safe step stays in the box and reports slack") {
  PcisPredicate pred = poly_predicate(2.0);
  pred.input_box = Box::uniform(1, -0.1, 0.1);
  const Eigen::Vector2d x(3.0, 3.0);
  const Prediction r{PolynomialPlant::residual(x), Eigen::Vector2d(0.0, 1.0)};
  const SafeStep st = safe_step(pred, x, Eigen::VectorXd::Constant(1, 7.0), r, {});
  CHECK(pred.input_box.contains(st.u));
  CHECK(st.s > 0.0);
  CHECK(st.diagnostics.intervened);

  PcisPredicate wide = poly_predicate(2.0);
  const Eigen::Vector2d near(0.01, 0.0);
  const Prediction tiny{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  const Clf c = lqr(linearize(PolynomialPlant(), Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(1)),
                    0.1 * Eigen::MatrixXd::Identity(2, 2), 0.1 * Eigen::MatrixXd::Identity(1, 1));
  const Eigen::VectorXd u_lin = -c.K * near;
  const SafeStep t = safe_step(wide, near, u_lin, tiny, {});
  CHECK(t.u == u_lin);
  CHECK_FALSE(t.diagnostics.intervened);
}

}  // TEST_SUITE
