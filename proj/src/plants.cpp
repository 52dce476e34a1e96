#include "gppcis/plants.hpp"

#include <cmath>
#include <stdexcept>

namespace gppcis {

namespace {

void require_finite(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (!x.allFinite() || !u.allFinite()) throw std::invalid_argument("non-finite state or input");
}

// Signed flow from j into i through an orifice, and its derivative w.r.t. h_j.
double net_flow(double c, double hi, double hj) {
  return TankPlant::coupling_flow(c, hj, hi) - TankPlant::coupling_flow(c, hi, hj);
}

double net_flow_slope(double c, double hi, double hj) {
  const double head = std::abs(hj - hi);
  if (head == 0.0) throw std::domain_error("coupling flow is not differentiable at equal heads");
  return c / (2.0 * std::sqrt(head));
}

}  // namespace

PolynomialPlant::PolynomialPlant(double dt, Box state_box, Box input_box) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  dt_ = dt;
  state_box_ = std::move(state_box);
  input_box_ = std::move(input_box);
}

Eigen::VectorXd PolynomialPlant::deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double) const {
  require_finite(x, u);
  Eigen::VectorXd dx(2);
  dx << x[1], -2.0 * x[1] + x[1] * x[1] + u[0];
  return dx;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> PolynomialPlant::jacobians(const Eigen::VectorXd& x,
                                                                       const Eigen::VectorXd& u, double) const {
  require_finite(x, u);
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, -2.0 + 2.0 * x[1];
  B << 0.0, 1.0;
  return {A, B};
}

Eigen::VectorXd PolynomialPlant::residual(const Eigen::VectorXd& x) {
  Eigen::VectorXd g(2);
  g << 0.0, x[1] * x[1];
  return g;
}

double orifice_coefficient(double discharge, double area, double gravity) {
  return discharge * area * std::sqrt(2.0 * gravity);
}

TankPlant::TankPlant(TankParams params) : params_(std::move(params)) {
  if ((params_.areas.array() <= 0.0).any()) throw std::invalid_argument("tank areas must be positive");
  if (!(params_.dt > 0.0)) throw std::invalid_argument("time step must be positive");
  c_down_ = orifice_coefficient(params_.outlet_discharge, params_.outlet_area, params_.gravity);
  c12_ = orifice_coefficient(params_.coupling_discharge, params_.coupling_area_12, params_.gravity);
  c23_ = orifice_coefficient(params_.coupling_discharge, params_.coupling_area_23, params_.gravity);
  if (!(c_down_ > 0.0 && c12_ > 0.0 && c23_ > 0.0)) throw std::invalid_argument("orifice coefficients must be positive");
  dt_ = params_.dt;
  state_box_ = band_box();
  input_box_ = Box::uniform(3, 0.0, 1.0);
}

double TankPlant::outflow(double h, double v) const { return v * c_down_ * std::sqrt(std::max(h, 0.0)); }

double TankPlant::coupling_flow(double c, double hi, double hj) { return c * std::sqrt(std::max(hi - hj, 0.0)); }

Box TankPlant::physical_box() const { return Box::uniform(3, params_.h_min, params_.h_max); }

Box TankPlant::band_box() const {
  return Box::uniform(3, params_.band_low * params_.tank_height, params_.band_high * params_.tank_height);
}

Eigen::VectorXd TankPlant::deriv(const Eigen::VectorXd& h, const Eigen::VectorXd& v, double pump) const {
  require_finite(h, v);
  if (!std::isfinite(pump)) throw std::invalid_argument("non-finite pump inflow");
  const double f21 = net_flow(c12_, h[0], h[1]);  // into 1 from 2
  const double f32 = net_flow(c23_, h[1], h[2]);  // into 2 from 3
  Eigen::VectorXd dh(3);
  dh[0] = (f21 - outflow(h[0], v[0])) / params_.areas[0];
  dh[1] = (pump - f21 + f32 - outflow(h[1], v[1])) / params_.areas[1];
  dh[2] = (-f32 - outflow(h[2], v[2])) / params_.areas[2];
  return dh;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> TankPlant::jacobians(const Eigen::VectorXd& h, const Eigen::VectorXd& v,
                                                                 double) const {
  require_finite(h, v);
  if ((h.array() <= 0.0).any()) throw std::domain_error("outflow is not differentiable at zero height");
  const double s12 = net_flow_slope(c12_, h[0], h[1]);
  const double s23 = net_flow_slope(c23_, h[1], h[2]);
  Eigen::Vector3d d_out;
  for (int i = 0; i < 3; ++i) d_out[i] = v[i] * c_down_ / (2.0 * std::sqrt(h[i]));

  Eigen::Matrix3d A;
  A << -s12 - d_out[0], s12, 0.0,
       s12, -s12 - s23 - d_out[1], s23,
       0.0, s23, -s23 - d_out[2];
  A.array().colwise() /= params_.areas.array();
  Eigen::Matrix3d B = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) B(i, i) = -c_down_ * std::sqrt(h[i]) / params_.areas[i];
  return {A, B};
}

Eigen::VectorXd TankPlant::steady_valves(const Eigen::VectorXd& h, double pump) const {
  Eigen::VectorXd v(3);
  const Eigen::VectorXd open = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd inflow = deriv(h, open, pump);  // rates with all valves shut
  for (int i = 0; i < 3; ++i) {
    if (inflow[i] < 0.0) throw std::domain_error("no valve opening holds this level: net inflow is negative");
    double lo = 0.0, hi = 1.0;
    auto rate = [&](double vi) {
      Eigen::VectorXd u = open;
      u[i] = vi;
      return deriv(h, u, pump)[i];
    };
    if (rate(hi) > 0.0) throw std::domain_error("no valve opening holds this level: inflow exceeds full outflow");
    for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (rate(mid) > 0.0) lo = mid;
      else hi = mid;
    }
    v[i] = 0.5 * (lo + hi);
  }
  return v;
}

Eigen::VectorXd step_rk4(const Plant& plant, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt, double w) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  return plant.project(rk4_step([&](const Eigen::VectorXd& s) { return plant.deriv(s, u, w); }, x, dt));
}

Eigen::VectorXd measure(const Eigen::VectorXd& x, const Eigen::MatrixXd& R, std::mt19937_64& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  const Eigen::MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return x + root * z;
}

std::pair<double, DisturbanceState> pump_inflow(const PumpModel& pump, const DisturbanceState& state,
                                                std::mt19937_64& rng) {
  if (!(pump.rho_d >= 0.0 && pump.rho_d < 1.0)) throw std::invalid_argument("AR(1) coefficient must lie in [0, 1)");
  std::normal_distribution<double> normal;
  const double eps = pump.sigma_eps * normal(rng);
  const double omega = pump.sigma_d * normal(rng);
  const double q = std::max(pump.mean_inflow * (1.0 + eps) + state.d, 0.0);
  return {q, DisturbanceState{pump.rho_d * state.d + omega}};
}

Eigen::VectorXd rate_limit(const Eigen::VectorXd& previous, const Eigen::VectorXd& command, double max_rate,
                           double dt) {
  const double step = max_rate * dt;
  return previous + (command - previous).cwiseMax(-step).cwiseMin(step);
}

}  // namespace gppcis
