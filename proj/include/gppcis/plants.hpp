#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace gppcis {

/// Axis-aligned box {x : lower <= x <= upper}.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box uniform(Eigen::Index dim, double lo, double hi) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
  }
  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
  }
  /// Smallest distance to a face; negative outside.
  double margin(const Eigen::VectorXd& x) const {
    return std::min((x - lower).minCoeff(), (upper - x).minCoeff());
  }
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  Box shifted(const Eigen::VectorXd& offset) const { return {lower - offset, upper - offset}; }
  bool empty() const { return (upper.array() < lower.array()).any(); }
};

/// Continuous-time truth dynamics x' = f(x, u, w) with a scalar exogenous
/// input w (the pump inflow for the tank, unused for the polynomial plant).
class Plant {
 public:
  virtual ~Plant() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::VectorXd deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double w = 0.0) const = 0;
  /// Analytic (df/dx, df/du); throws where f is not differentiable.
  virtual std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                                                double w = 0.0) const = 0;
  /// Physical post-step projection (tank heights cannot go negative).
  virtual Eigen::VectorXd project(Eigen::VectorXd x) const { return x; }

  double dt() const { return dt_; }
  const Box& state_box() const { return state_box_; }
  const Box& input_box() const { return input_box_; }

 protected:
  double dt_ = 0.01;
  Box state_box_;
  Box input_box_;
};

/// x1' = x2,  x2' = -2 x2 + x2^2 + u.
class PolynomialPlant final : public Plant {
 public:
  PolynomialPlant(double dt = 0.01, Box state_box = Box::uniform(2, -5.0, 5.0),
                  Box input_box = Box::uniform(1, -10.0, 10.0));

  std::string name() const override { return "poly2d"; }
  Eigen::Index state_dim() const override { return 2; }
  Eigen::Index input_dim() const override { return 1; }
  Eigen::VectorXd deriv(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double w = 0.0) const override;
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                                        double w = 0.0) const override;

  /// Truth minus the origin linearisation: [0, x2^2].
  static Eigen::VectorXd residual(const Eigen::VectorXd& x);
};

/// Torricelli orifice coefficient C_d a sqrt(2 g).
double orifice_coefficient(double discharge, double area, double gravity = 9.81);

struct PumpModel {
  double mean_inflow = 1.5e-5;  // m^3/s
  double sigma_eps = 0.02;
  double rho_d = 0.98;
  double sigma_d = 1e-7;        // m^3/s
};

struct DisturbanceState {
  double d = 0.0;
};

struct TankParams {
  Eigen::Vector3d areas{0.015, 0.015, 0.015};
  double outlet_area = 5.0e-5;
  double outlet_discharge = 0.62;
  double coupling_area_12 = 3.0e-5;
  double coupling_area_23 = 3.0e-5;
  double coupling_discharge = 0.62;
  double gravity = 9.81;
  double h_min = 0.12;  // physical safety limits, m
  double h_max = 0.30;
  double tank_height = 0.30;
  double band_low = 0.45;   // operative band as fractions of tank_height
  double band_high = 0.87;
  double max_valve_rate = 1.0;  // 1/s
  double dt = 1.0;
  PumpModel pump;
  double sensor_stddev = 1e-4;  // m
};

/// Three cross-coupled tanks draining through valves, pump into tank 2.
class TankPlant final : public Plant {
 public:
  explicit TankPlant(TankParams params = {});

  std::string name() const override { return "tank3"; }
  Eigen::Index state_dim() const override { return 3; }
  Eigen::Index input_dim() const override { return 3; }
  Eigen::VectorXd deriv(const Eigen::VectorXd& h, const Eigen::VectorXd& v, double pump = 0.0) const override;
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(const Eigen::VectorXd& h, const Eigen::VectorXd& v,
                                                        double pump = 0.0) const override;
  Eigen::VectorXd project(Eigen::VectorXd h) const override { return h.cwiseMax(0.0); }

  const TankParams& params() const { return params_; }
  double outlet_coefficient() const { return c_down_; }
  double coupling_coefficient_12() const { return c12_; }
  double coupling_coefficient_23() const { return c23_; }

  /// q_i_down = v c sqrt(max(h, 0)).
  double outflow(double h, double v) const;
  /// q_ij for the given pair coefficient: c sqrt(max(h_i - h_j, 0)).
  static double coupling_flow(double c, double hi, double hj);

  /// Physical limits [h_min, h_max] and the operative percent band.
  Box physical_box() const;
  Box band_box() const;

  /// Valve openings holding h steady under constant pump inflow (bisection per tank).
  Eigen::VectorXd steady_valves(const Eigen::VectorXd& h, double pump) const;

 private:
  TankParams params_;
  double c_down_;
  double c12_;
  double c23_;
};

/// One classical RK4 step of x' = f(x).
template <typename F>
Eigen::VectorXd rk4_step(F&& f, const Eigen::VectorXd& x, double dt) {
  const Eigen::VectorXd k1 = f(x);
  const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 with the input held over the step, followed by the plant projection.
Eigen::VectorXd step_rk4(const Plant& plant, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                         double w = 0.0);

/// y = x + nu, nu ~ N(0, R).
Eigen::VectorXd measure(const Eigen::VectorXd& x, const Eigen::MatrixXd& R, std::mt19937_64& rng);

/// q_p = qbar (1 + eps) + d floored at 0, then d <- rho d + omega.
std::pair<double, DisturbanceState> pump_inflow(const PumpModel& pump, const DisturbanceState& state,
                                                std::mt19937_64& rng);

/// Moves from `previous` toward `command` by at most max_rate dt per channel.
Eigen::VectorXd rate_limit(const Eigen::VectorXd& previous, const Eigen::VectorXd& command, double max_rate,
                           double dt);

}  // namespace gppcis
