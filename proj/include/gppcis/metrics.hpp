#pragma once

#include <chrono>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/calibration.hpp"
#include "gppcis/plants.hpp"

namespace gppcis {

double rmse(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Eigen::Ref<const Eigen::VectorXd>& targets);
double mae(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Eigen::Ref<const Eigen::VectorXd>& targets);
/// 1 - SS_res / SS_tot; NaN when the targets have zero variance.
double r2(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Eigen::Ref<const Eigen::VectorXd>& targets);

/// Mean 95% interval width, 3.92 sigma_bar.
double mpiw(double sigma_bar);
/// |coverage - 0.95|.
double calibration_error(double coverage);

struct SafetyReport {
  long violations = 0;  // samples outside the state box or input box
  double min_distance = std::numeric_limits<double>::infinity();  // signed distance to the nearest face
  double first_violation_time = std::numeric_limits<double>::quiet_NaN();
};

/// Rows of `states`/`inputs` are samples at `times`; `inputs` may be empty.
SafetyReport safety_report(const Eigen::VectorXd& times, const Eigen::MatrixXd& states, const Eigen::MatrixXd& inputs,
                           const Box& state_box, const Box& input_box);

/// Monotone wall clock in seconds.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace gppcis
