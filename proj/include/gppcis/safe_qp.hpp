#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gppcis/control.hpp"
#include "gppcis/pcis.hpp"

namespace gppcis {

/// min (u - u_lin)^T R_s (u - u_lin) + rho s + q^T u
/// s.t. a^T u + b <= s, s >= 0, u_min <= u <= u_max.
struct QpProblem {
  Eigen::VectorXd u_lin;
  Eigen::MatrixXd R_s;
  double rho = 1e3;
  Eigen::VectorXd linear;  // q; empty means zero
  Eigen::VectorXd a;
  double b = 0.0;
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
};

struct QpSolution {
  Eigen::VectorXd u;
  double s = 0.0;
  double objective = 0.0;
  std::vector<int> bound_state;  // per input: -1 at lower, +1 at upper, 0 inside
  bool constraint_active = false;
  double multiplier = 0.0;       // on a^T u + b <= s
  double kkt_residual = 0.0;     // scaled max of stationarity/feasibility/complementarity
};

double qp_objective(const QpProblem& p, const Eigen::VectorXd& u, double s);

/// Exact solution by enumerating active sets: 3^m box patterns times the two
/// slack regimes, each solved as an equality-constrained KKT system. Ties
/// go to the lexicographically smallest u.
QpSolution solve_qp(const QpProblem& problem);

/// KKT residual of a candidate (u, s) with the multiplier chosen to minimise it.
double kkt_residual(const QpProblem& problem, const Eigen::VectorXd& u, double s, double* multiplier = nullptr);

struct FilterSettings {
  Eigen::MatrixXd R_s;          // empty means identity
  double rho = 0.0;             // <= 0 means 1e3 * lambda_max(R_s)
  double explore_weight = 0.0;  // alpha
  Eigen::VectorXd explore_direction;  // w >= 0 over state components
};

/// CLF-QP at deviation state x. The CLF constraint comes from `pred` (its
/// centre is the current target); the exploration term contributes
/// q = -alpha (w^T sigma(x)) B^T w as a per-step constant weight.
QpProblem build_qp(const PcisPredicate& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& u_lin,
                   const Prediction& residual, const FilterSettings& settings);

struct StepDiagnostics {
  double b = 0.0;
  double s = 0.0;
  double margin = 0.0;      // -(a^T u + b): positive when the robust decrease holds with room
  double sigma_agg = 0.0;   // sum_i sigma_i |grad V_i|
  bool intervened = false;  // u differs from u_lin or slack used
  std::vector<int> bound_state;
};

struct SafeStep {
  Eigen::VectorXd u;
  double s = 0.0;
  StepDiagnostics diagnostics;
};

SafeStep safe_step(const PcisPredicate& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& u_lin,
                   const Prediction& residual, const FilterSettings& settings);

}  // namespace gppcis
