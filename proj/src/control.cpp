#include "gppcis/control.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "gppcis/plants.hpp"

namespace gppcis {

namespace {

Eigen::MatrixXd vec_solve(const Eigen::MatrixXd& op, const Eigen::MatrixXd& rhs) {
  const Eigen::Index n = rhs.rows();
  const Eigen::VectorXd x = op.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), n * n));
  Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

void check_shapes(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                  const Eigen::MatrixXd& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols()) {
    throw std::invalid_argument("inconsistent LQR dimensions");
  }
  if (R.llt().info() != Eigen::Success) throw std::invalid_argument("R must be positive definite");
}

}  // namespace

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  // vec(A^T X + X A) = (I kron A^T + A^T kron I) vec(X)
  const Eigen::MatrixXd op = Eigen::kroneckerProduct(I, A.transpose()) + Eigen::kroneckerProduct(A.transpose(), I);
  return vec_solve(op, -Q);
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd op = Eigen::kroneckerProduct(A.transpose(), A.transpose()) -
                             Eigen::MatrixXd::Identity(n * n, n * n);
  return vec_solve(op, -Q);
}

double spectral_abscissa(const Eigen::MatrixXd& A) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().real().maxCoeff();
}

double spectral_radius(const Eigen::MatrixXd& A) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, bool discrete) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    if (B.col(j).cwiseAbs().maxCoeff() == 0.0) return false;
  }
  const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues();
  const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff()});
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const bool unstable = discrete ? std::abs(eig[i]) >= 1.0 : eig[i].real() >= 0.0;
    if (!unstable) continue;
    Eigen::MatrixXcd pbh(n, n + B.cols());
    pbh << A.cast<std::complex<double>>() - eig[i] * Eigen::MatrixXcd::Identity(n, n), B.cast<std::complex<double>>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(pbh);
    lu.setThreshold(1e-10 * scale);
    if (lu.rank() < n) return false;
  }
  return true;
}

Eigen::MatrixXd care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R) {
  check_shapes(A, B, Q, R);
  if (!is_stabilizable(A, B)) throw std::invalid_argument("(A, B) is not stabilisable");
  const Eigen::Index n = A.rows();
  const Eigen::LLT<Eigen::MatrixXd> Rllt(R);

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(B.cols(), n);
  if (spectral_abscissa(A) >= 0.0) {
    // Bass: with -(A + bI) Hurwitz, Z solving (A + bI) Z + Z (A + bI)^T = 2 B B^T
    // gives the stabilising gain B^T Z^{-1}.
    const double b = A.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
    const Eigen::MatrixXd Ab = A + b * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Z = solve_lyapunov(-Ab.transpose(), 2.0 * B * B.transpose());
    K = B.transpose() * Z.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
    if (spectral_abscissa(A - B * K) >= 0.0) throw std::runtime_error("could not find a stabilising seed gain");
  }

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int it = 0; it < 100; ++it) {
    const Eigen::MatrixXd Acl = A - B * K;
    const Eigen::MatrixXd next = solve_lyapunov(Acl, Q + K.transpose() * R * K);
    const double change = (next - P).norm();
    P = next;
    K = Rllt.solve(B.transpose() * P);
    if (change <= 1e-14 * std::max(1.0, P.norm())) break;
  }
  if (!P.allFinite()) throw std::runtime_error("Riccati iteration diverged");
  return P;
}

double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd res =
      A.transpose() * P + P * A - P * B * R.llt().solve(B.transpose() * P) + Q;
  return res.norm();
}

Eigen::MatrixXd dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R) {
  check_shapes(A, B, Q, R);
  if (!is_stabilizable(A, B, true)) throw std::invalid_argument("(A, B) is not stabilisable");
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd G = B * R.llt().solve(B.transpose());
  Eigen::MatrixXd H = Q;
  for (int it = 0; it < 200; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I + G * H);
    const Eigen::MatrixXd W = lu.solve(Ak);
    const Eigen::MatrixXd Hn = H + Ak.transpose() * H * W;
    G = G + Ak * lu.solve(G) * Ak.transpose();
    Ak = Ak * W;
    const double change = (Hn - H).norm();
    H = 0.5 * (Hn + Hn.transpose());
    if (change <= 1e-14 * std::max(1.0, H.norm())) break;
  }
  if (!H.allFinite()) throw std::runtime_error("Riccati iteration diverged");
  return H;
}

Clf lqr(const LinearModel& model, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double decay_override) {
  Clf clf;
  clf.discrete = model.discrete();
  const Eigen::MatrixXd& A = model.A;
  const Eigen::MatrixXd& B = model.B;
  if (clf.discrete) {
    clf.P = dare(A, B, Q, R);
    clf.K = (R + B.transpose() * clf.P * B).llt().solve(B.transpose() * clf.P * A);
    const Eigen::MatrixXd Acl = A - B * clf.K;
    // Largest v with Acl^T P Acl <= (1 - v) P.
    const Eigen::LLT<Eigen::MatrixXd> Pllt(clf.P);
    const Eigen::MatrixXd Linv = Pllt.matrixL().solve(Eigen::MatrixXd::Identity(A.rows(), A.rows()));
    const Eigen::MatrixXd M = Linv * Acl.transpose() * clf.P * Acl * Linv.transpose();
    clf.decay = 1.0 - Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (M + M.transpose()))
                          .eigenvalues()
                          .maxCoeff();
  } else {
    clf.P = care(A, B, Q, R);
    clf.K = R.llt().solve(B.transpose() * clf.P);
    const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(A - B * clf.K, false).eigenvalues();
    clf.decay = 0.5 * eig.real().cwiseAbs().minCoeff();
  }
  if (decay_override > 0.0) clf.decay = decay_override;
  return clf;
}

LinearModel linearize(const Plant& plant, const Eigen::VectorXd& x_op, const Eigen::VectorXd& u_op, double w) {
  auto [A, B] = plant.jacobians(x_op, u_op, w);
  LinearModel m;
  m.A = std::move(A);
  m.B = std::move(B);
  m.x_op = x_op;
  m.u_op = u_op;
  return m;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& M) { return M.exp(); }

LinearModel discretize_zoh(const LinearModel& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  const Eigen::Index n = model.state_dim();
  const Eigen::Index m = model.input_dim();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = model.A * dt;
  aug.topRightCorner(n, m) = model.B * dt;
  const Eigen::MatrixXd E = expm(aug);
  LinearModel d = model;
  d.A = E.topLeftCorner(n, n);
  d.B = E.topRightCorner(n, m);
  d.dt = dt;
  return d;
}

}  // namespace gppcis
