#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gppcis/kernels.hpp"
#include "oracles.hpp"

using gppcis::Kernel;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

std::vector<Kernel> zoo(Eigen::Index dim) {
  return {Kernel::rbf(1.3, 0.7),
          Kernel::matern32(0.8, 1.1),
          Kernel::matern52(2.0, 0.5),
          Kernel::polynomial(0.5, 2),
          Kernel::linear(1.5, 0.3),
          Kernel::periodic(1.0, 0.9, 2.5),
          Kernel::rbf_ard(1.2, Eigen::VectorXd::LinSpaced(dim, 0.4, 1.6)),
          Kernel::sum(Kernel::rbf(1.0, 1.0), Kernel::matern32(0.5, 2.0)),
          Kernel::sum(Kernel::periodic(0.7, 1.0, 3.0), Kernel::rbf(1.0, 0.6))};
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("closed forms") {
  const Kernel rbf = Kernel::rbf(1.0, 1.0);
  CHECK(rbf(vec({0.3}), vec({0.3})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rbf(vec({0.0}), vec({std::sqrt(2.0)})) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(rbf(vec({0.0}), vec({std::sqrt(2.0)})) == doctest::Approx(0.367879).epsilon(1e-6));

  const Kernel m32 = Kernel::matern32(1.0, 1.0);
  const double r3 = std::sqrt(3.0);
  CHECK(m32(vec({0.0}), vec({1.0})) == doctest::Approx((1.0 + r3) * std::exp(-r3)).epsilon(1e-14));
  CHECK(m32(vec({0.0}), vec({1.0})) == doctest::Approx(0.48335).epsilon(1e-5));

  const double r = 0.8, l = 0.5, sf2 = 2.0;
  const double z = std::sqrt(5.0) * r / l;
  CHECK(Kernel::matern52(sf2, l)(vec({0.0}), vec({r})) ==
        doctest::Approx(sf2 * (1 + z + z * z / 3) * std::exp(-z)).epsilon(1e-14));

  const Eigen::VectorXd a = vec({1.0, -2.0}), b = vec({0.5, 3.0});
  CHECK(Kernel::polynomial(0.5, 2)(a, b) == doctest::Approx(0.5 * std::pow(a.dot(b) + 1.0, 2)).epsilon(1e-14));
  CHECK(Kernel::linear(1.5, 0.3)(a, b) == doctest::Approx(1.5 * (a.dot(b) + 0.3)).epsilon(1e-14));
  const double s2 = std::pow(std::sin(M_PI * 0.5 / 2.5), 2) + std::pow(std::sin(M_PI * -5.0 / 2.5), 2);
  CHECK(Kernel::periodic(1.0, 0.9, 2.5)(a, b) == doctest::Approx(std::exp(-2.0 * s2 / 0.81)).epsilon(1e-13));
  // shifting one coordinate by a full period changes nothing
  CHECK(Kernel::periodic(1.0, 0.9, 2.5)(a, vec({0.5 + 2.5, 3.0})) ==
        doctest::Approx(Kernel::periodic(1.0, 0.9, 2.5)(a, b)).epsilon(1e-12));
}

TEST_CASE("gram of a single row is the kernel value") {
  const Kernel k = Kernel::matern52(1.7, 0.4);
  Eigen::MatrixXd X(1, 2);
  X << 0.2, -0.1;
  const Eigen::MatrixXd G = k.gram(X);
  REQUIRE(G.rows() == 1);
  CHECK(G(0, 0) == doctest::Approx(k(X.row(0).transpose(), X.row(0).transpose())));
}

TEST_CASE("gram entries equal pointwise evaluations") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = oracle::uniform(rng, 7, 3, -2, 2);
  const Eigen::MatrixXd Y = oracle::uniform(rng, 5, 3, -2, 2);
  for (const Kernel& k : zoo(3)) {
    const Eigen::MatrixXd G = k.gram(X, Y);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = 0; j < Y.rows(); ++j)
        CHECK(G(i, j) == doctest::Approx(k(X.row(i).transpose(), Y.row(j).transpose())).epsilon(1e-12));
    const Eigen::VectorXd diag = k.diagonal(X);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      CHECK(diag[i] == doctest::Approx(k(X.row(i).transpose(), X.row(i).transpose())).epsilon(1e-12));
  }
}

TEST_CASE("symmetry over random pairs") {
  std::mt19937_64 rng(5);
  for (const Kernel& k : zoo(2)) {
    for (int t = 0; t < 1000; ++t) {
      const Eigen::MatrixXd P = oracle::uniform(rng, 2, 2, -3, 3);
      const Eigen::VectorXd x = P.row(0).transpose(), y = P.row(1).transpose();
      const double kxy = k(x, y), kyx = k(y, x);
      REQUIRE(std::abs(kxy - kyx) <= 1e-15 * std::max(1.0, std::abs(kxy)));
      REQUIRE(k(x, x) >= 0.0);
    }
    const Eigen::MatrixXd X = oracle::uniform(rng, 12, 2, -3, 3);
    const Eigen::MatrixXd G = k.gram(X);
    CHECK((G - G.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gram is positive semidefinite") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    for (const Kernel& k : zoo(3)) {
      const Eigen::Index n = 2 + t % 19;
      const Eigen::MatrixXd X = oracle::uniform(rng, n, 3, -2, 2);
      Eigen::MatrixXd G = k.gram(X);
      G.diagonal().array() += 1e-8 * k.signal_variance();
      Eigen::LLT<Eigen::MatrixXd> llt(G);
      REQUIRE(llt.info() == Eigen::Success);
    }
  }
  // five points, eigenvalue oracle
  const Eigen::MatrixXd X = oracle::uniform(rng, 5, 2, -1, 1);
  for (const Kernel& k : zoo(2)) {
    Eigen::MatrixXd G = k.gram(X);
    G.diagonal().array() += 1e-8;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);
  }
}

TEST_CASE("ARD with equal lengthscales is the isotropic RBF") {
  std::mt19937_64 rng(13);
  const Kernel ard = Kernel::rbf_ard(1.4, Eigen::VectorXd::Constant(3, 0.8));
  const Kernel iso = Kernel::rbf(1.4, 0.8);
  const Eigen::MatrixXd X = oracle::uniform(rng, 30, 3, -2, 2);
  CHECK((ard.gram(X) - iso.gram(X)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sum kernel adds exactly") {
  std::mt19937_64 rng(17);
  const Kernel a = Kernel::rbf(1.0, 0.5), b = Kernel::polynomial(0.3, 2);
  const Kernel s = Kernel::sum(a, b);
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd P = oracle::uniform(rng, 2, 2, -2, 2);
    const Eigen::VectorXd x = P.row(0).transpose(), y = P.row(1).transpose();
    CHECK(s(x, y) == a(x, y) + b(x, y));
  }
}

TEST_CASE("invalid construction and dimension mismatch") {
  CHECK_THROWS_AS(Kernel::rbf(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::matern32(1.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::periodic(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::polynomial(1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::rbf_ard(1.0, Eigen::VectorXd::Constant(2, -0.1)), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::rbf(1.0, 1.0)(vec({1.0}), vec({1.0, 2.0})), std::invalid_argument);
  CHECK_THROWS_AS(Kernel::rbf_ard(1.0, Eigen::VectorXd::Ones(2))(vec({1.0, 2.0, 3.0}), vec({1.0, 2.0, 3.0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(Kernel::from_name("spectral", 2), std::invalid_argument);
}

TEST_CASE("names and log-parameter round trip") {
  for (const char* name : {"rbf", "matern32", "matern52", "poly2", "linear", "periodic", "rbf-ard", "rbf+matern32",
                           "periodic+rbf", "linear+rbf"}) {
    const Kernel k = Kernel::from_name(name, 2);
    CHECK(k.name() == name);
    const Eigen::VectorXd p = k.log_params();
    CHECK(p.size() == k.num_params());
    const Eigen::VectorXd shifted = p.array() + 0.1;
    CHECK((k.with_log_params(shifted).log_params() - shifted).cwiseAbs().maxCoeff() <= 1e-12);
    const auto [lo, hi] = k.log_bounds();
    CHECK(lo.size() == p.size());
    CHECK((lo.array() < hi.array()).all());
  }
  CHECK(Kernel::from_name("poly2", 2).degree() == 2);
}

}  // TEST_SUITE
