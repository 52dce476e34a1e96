#include "gppcis/calibration.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gppcis {

double beta(double noise_stddev, double gamma_bar, double delta_t, double rkhs_bound) {
  if (!(delta_t > 0.0 && delta_t < 1.0)) throw std::invalid_argument("delta_t must lie in (0, 1)");
  return noise_stddev * std::sqrt(2.0 * (gamma_bar + 1.0 + std::log(1.0 / delta_t))) + rkhs_bound;
}

double information_gain_bound(double gain_constant, Eigen::Index input_dim, double t) {
  return gain_constant * static_cast<double>(input_dim) * std::log(t + 1.0);
}

double step_risk(double delta, long t) {
  if (t < 1) throw std::invalid_argument("risk steps start at 1");
  const double tt = static_cast<double>(t);
  return 6.0 * delta / (std::numbers::pi * std::numbers::pi * tt * tt);
}

double beta(const RiskSchedule& s, long t) {
  if (s.constant) return s.constant_beta;
  const double gamma_bar = information_gain_bound(s.gain_constant, s.input_dim, static_cast<double>(t - 1));
  return beta(s.noise_stddev, gamma_bar, step_risk(s.delta, t), s.rkhs_bound);
}

double coverage(const Eigen::Ref<const Eigen::VectorXd>& r, const Eigen::Ref<const Eigen::VectorXd>& s, double z) {
  if (r.size() != s.size()) throw std::invalid_argument("coverage inputs differ in length");
  if (r.size() == 0) throw std::invalid_argument("coverage of an empty sample");
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (std::abs(r[i]) <= z * s[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(r.size());
}

double calibrate_gamma(const Eigen::Ref<const Eigen::VectorXd>& r, const Eigen::Ref<const Eigen::VectorXd>& s,
                       double target) {
  if (r.size() != s.size()) throw std::invalid_argument("calibration inputs differ in length");
  if (r.size() < 20) throw std::invalid_argument("calibration needs at least 20 validation pairs");
  if ((s.array() <= 0.0).any()) throw std::invalid_argument("validation stddevs must be positive");
  auto covered = [&](double g) { return coverage(r, std::sqrt(g) * s, 1.96) >= target; };
  if (covered(1.0)) return 1.0;
  if (!covered(1e6)) throw std::runtime_error("coverage target unreachable; predictive variances look broken");
  // Work on the 1e-3 lattice so the result is the smallest lattice point that covers.
  long lo = 1000, hi = 1000000000;
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (covered(static_cast<double>(mid) * 1e-3)) hi = mid;
    else lo = mid;
  }
  return static_cast<double>(hi) * 1e-3;
}

}  // namespace gppcis
