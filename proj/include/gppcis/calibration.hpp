#pragma once

#include <Eigen/Dense>

namespace gppcis {

/// Per-step risk budget and the quantities entering beta_t.
struct RiskSchedule {
  double delta = 0.05;            // total risk
  double rkhs_bound = 1.0;        // B
  double noise_stddev = 0.1;      // sigma_n
  double gain_constant = 1.0;     // c in gamma_bar_t = c d log(t + 1)
  Eigen::Index input_dim = 1;     // d
  bool constant = false;          // pin beta to constant_beta
  double constant_beta = 2.0;
};

/// sigma_n sqrt(2 (gamma_bar + 1 + ln(1/delta_t))) + B.
double beta(double noise_stddev, double gamma_bar, double delta_t, double rkhs_bound);

/// c = 1 for RBF-type kernels, 2 for Matern.
double information_gain_bound(double gain_constant, Eigen::Index input_dim, double t);

/// delta_t = 6 delta / (pi^2 t^2), t >= 1; the budgets sum to at most delta.
double step_risk(double delta, long t);

/// beta_t for step t >= 1 (gamma_bar evaluated at t - 1).
double beta(const RiskSchedule& schedule, long t);

/// Fraction of |r_i| <= z s_i. Shared by the calibration and metrics code.
double coverage(const Eigen::Ref<const Eigen::VectorXd>& residuals, const Eigen::Ref<const Eigen::VectorXd>& stddevs,
                double z = 1.96);

/// Smallest gamma >= 1 (resolution 1e-3) with coverage(r, sqrt(gamma) s) >= target.
double calibrate_gamma(const Eigen::Ref<const Eigen::VectorXd>& residuals,
                       const Eigen::Ref<const Eigen::VectorXd>& stddevs, double target = 0.95);

}  // namespace gppcis
