#include "gppcis/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gppcis {

namespace {

void check(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& t) {
  if (p.size() != t.size()) throw std::invalid_argument("prediction and target lengths differ");
  if (p.size() == 0) throw std::invalid_argument("metrics of an empty sample");
}

}  // namespace

double rmse(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& t) {
  check(p, t);
  return std::sqrt((p - t).squaredNorm() / static_cast<double>(p.size()));
}

double mae(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& t) {
  check(p, t);
  return (p - t).cwiseAbs().mean();
}

double r2(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& t) {
  check(p, t);
  const double ss_tot = (t.array() - t.mean()).square().sum();
  if (ss_tot == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 1.0 - (p - t).squaredNorm() / ss_tot;
}

double mpiw(double sigma_bar) {
  if (sigma_bar < 0.0) throw std::invalid_argument("mean stddev must be non-negative");
  return 3.92 * sigma_bar;
}

double calibration_error(double c) {
  if (c < 0.0 || c > 1.0) throw std::invalid_argument("coverage must lie in [0, 1]");
  return std::abs(c - 0.95);
}

SafetyReport safety_report(const Eigen::VectorXd& times, const Eigen::MatrixXd& states, const Eigen::MatrixXd& inputs,
                           const Box& state_box, const Box& input_box) {
  if (states.rows() == 0) throw std::invalid_argument("empty trajectory");
  SafetyReport r;
  for (Eigen::Index k = 0; k < states.rows(); ++k) {
    const Eigen::VectorXd x = states.row(k).transpose();
    const double dist = state_box.margin(x);
    r.min_distance = std::min(r.min_distance, dist);
    bool bad = dist < 0.0;
    if (inputs.rows() > k) bad = bad || !input_box.contains(inputs.row(k).transpose(), 1e-12);
    if (bad) {
      if (r.violations == 0) r.first_violation_time = times[k];
      ++r.violations;
    }
  }
  return r;
}

}  // namespace gppcis
