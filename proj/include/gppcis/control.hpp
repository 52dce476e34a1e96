#pragma once

#include <Eigen/Dense>

namespace gppcis {

class Plant;

/// x' = A x + B u (dt == 0) or x+ = A x + B u (dt > 0), in deviation
/// coordinates about (x_op, u_op).
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double dt = 0.0;
  Eigen::VectorXd x_op;
  Eigen::VectorXd u_op;

  bool discrete() const { return dt > 0.0; }
  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
};

/// Quadratic CLF V(x) = x^T P x with its LQR gain. `decay` is lambda for
/// continuous models and the per-step decrease factor for discrete ones.
struct Clf {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  double decay = 0.0;
  bool discrete = false;

  template <typename Derived>
  double value(const Eigen::MatrixBase<Derived>& x) const {
    return x.dot(P * x);
  }
  template <typename Derived>
  Eigen::VectorXd gradient(const Eigen::MatrixBase<Derived>& x) const {
    return 2.0 * (P * x);
  }
};

/// X with A^T X + X A + Q = 0 (Kronecker solve; intended for small n).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);
/// X with A^T X A - X + Q = 0.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// Stabilising solution of A^T P + P A - P B R^{-1} B^T P + Q = 0
/// (Newton-Kleinman seeded by Bass's method). Throws if (A, B) is not stabilisable.
Eigen::MatrixXd care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R);
/// Stabilising DARE solution via the structure-preserving doubling iteration.
Eigen::MatrixXd dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R);

/// Frobenius norm of the CARE residual.
double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

/// PBH test plus the requirement that every input column acts on the state.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, bool discrete = false);

/// Continuous: max real part of eig(A). Discrete: spectral radius.
double spectral_abscissa(const Eigen::MatrixXd& A);
double spectral_radius(const Eigen::MatrixXd& A);

/// LQR for the model's time domain. The decay defaults to half the slowest
/// closed-loop rate (continuous) or the exact one-step decrease factor of V
/// (discrete); pass decay_override > 0 to pin it.
Clf lqr(const LinearModel& model, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double decay_override = 0.0);

/// Analytic Jacobians of the plant at (x_op, u_op) with exogenous input w.
LinearModel linearize(const Plant& plant, const Eigen::VectorXd& x_op, const Eigen::VectorXd& u_op, double w = 0.0);

/// Zero-order-hold discretisation through the augmented matrix exponential.
LinearModel discretize_zoh(const LinearModel& model, double dt);

/// Matrix exponential (scaling and squaring with Pade approximants).
Eigen::MatrixXd expm(const Eigen::MatrixXd& M);

}  // namespace gppcis
