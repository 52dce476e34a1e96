#include "gppcis/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>

#include "gppcis/calibration.hpp"
#include "gppcis/csv.hpp"
#include "gppcis/metrics.hpp"
#include "gppcis/rng.hpp"
#include "gppcis/safe_qp.hpp"

namespace gppcis {

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Kernel configured_kernel(const ExperimentConfig& c, Eigen::Index n) {
  Kernel k = Kernel::from_name(c.kernel, n);
  if (k.kind() == KernelKind::Sum) return k;
  Eigen::VectorXd lp = k.log_params();
  lp[0] = std::log(c.signal_variance);
  switch (k.kind()) {
    case KernelKind::RbfArd:
      for (Eigen::Index i = 0; i < n; ++i) {
        lp[1 + i] = std::log(c.lengthscales.at(static_cast<std::size_t>(i)));
      }
      break;
    case KernelKind::Rbf:
    case KernelKind::Matern32:
    case KernelKind::Matern52:
    case KernelKind::Periodic:
      lp[1] = std::log(c.lengthscales.at(0));
      break;
    default:
      break;
  }
  return k.with_log_params(lp);
}

Eigen::VectorXd simulate(const Benchmark& b, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double w) {
  return step_rk4(*b.plant, b.x_op + x, b.u_op + u, b.plant->dt(), w) - b.x_op;
}

// Collects observation rows before they are turned into a Dataset.
struct ObservationBuffer {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> targets;

  void add(std::pair<Eigen::VectorXd, Eigen::VectorXd> obs) {
    inputs.push_back(std::move(obs.first));
    targets.push_back(std::move(obs.second));
  }
  Dataset dataset(const Eigen::VectorXd& noise) const {
    const Eigen::Index n = noise.size();
    Dataset d;
    d.inputs.resize(static_cast<Eigen::Index>(inputs.size()), n);
    d.targets.resize(static_cast<Eigen::Index>(inputs.size()), n);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      d.inputs.row(static_cast<Eigen::Index>(i)) = inputs[i].transpose();
      d.targets.row(static_cast<Eigen::Index>(i)) = targets[i].transpose();
    }
    d.noise_variance = noise;
    return d;
  }
};

struct GammaResult {
  double gamma = 1.0;
  double raw = 0.0;
  double calibrated = 0.0;
};

// Coverage of held-out observations by the predictive distribution
// (latent variance plus observation noise), pooled over learned channels.
GammaResult calibrate(const ResidualModel& model, const Dataset& held_out, const ExperimentConfig& c) {
  const BatchPrediction p = model.predict(held_out.inputs);
  const auto& channels = model.options().learned_channels;
  const Eigen::Index rows = held_out.size();
  Eigen::VectorXd r(rows * static_cast<Eigen::Index>(channels.size()));
  Eigen::VectorXd s(r.size());
  Eigen::Index k = 0;
  for (Eigen::Index ch : channels) {
    for (Eigen::Index i = 0; i < rows; ++i, ++k) {
      r[k] = held_out.targets(i, ch) - p.mean(i, ch);
      s[k] = std::sqrt(p.stddev(i, ch) * p.stddev(i, ch) + held_out.noise_variance[ch]);
    }
  }
  GammaResult g;
  g.raw = coverage(r, s);
  if (c.calibrate) {
    try {
      g.gamma = calibrate_gamma(r, s, c.target_coverage);
    } catch (const std::runtime_error&) {
      g.gamma = 1e6;
    }
  }
  g.calibrated = coverage(r, std::sqrt(g.gamma) * s);
  return g;
}

double beta_for(const Benchmark& b, long t) {
  const ExperimentConfig& c = b.config;
  if (c.beta_mode == "constant") return c.beta;
  const Eigen::Index ch = b.model_options.learned_channels.front();
  RiskSchedule rs;
  rs.delta = c.delta;
  rs.rkhs_bound = c.rkhs_bound;
  rs.noise_stddev = std::sqrt(b.obs_noise[ch]) / b.model_options.output_scale[0];
  rs.gain_constant = c.gain_constant;
  rs.input_dim = b.x_op.size();
  return beta(rs, t);
}

struct TargetChoice {
  Eigen::VectorXd target;
  Eigen::VectorXd u_ff;
  double mu = 0.0;
  double sigma = 0.0;
  bool fallback = false;
};

// u with A x + B u + mu = 0, if it exists and lies in the input box.
std::optional<Eigen::VectorXd> feedforward(const Benchmark& b, const Eigen::MatrixXd& B_pinv, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& mean) {
  const Eigen::VectorXd r = b.model.A * x + mean;
  const Eigen::VectorXd u = -B_pinv * r;
  if ((r + b.model.B * u).norm() > 1e-9 * (1.0 + r.norm())) return std::nullopt;
  if (!b.input_box.contains(u)) return std::nullopt;
  return u;
}

void aggregate(const ResidualModel& model, const Prediction& p, double& mu, double& sigma) {
  mu = 0.0;
  sigma = 0.0;
  for (Eigen::Index ch : model.options().learned_channels) {
    mu += p.mean[ch];
    sigma += p.stddev[ch];
  }
}

TargetChoice choose_target(const Benchmark& b, const CertifiedSet& set, const ResidualModel& model, double beta,
                           const Eigen::VectorXd& current, const Eigen::VectorXd& previous) {
  const Eigen::MatrixXd B_pinv = b.model.B.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd& P = b.clf.P;
  const Eigen::MatrixXd members = set.member_points();
  const BatchPrediction pred = model.predict_calibrated(members);

  // Certified nominal equilibria, and which of them are admissible from `current`.
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::VectorXd> inputs;
  std::vector<bool> admissible;
  for (Eigen::Index i = 0; i < members.rows(); ++i) {
    const Eigen::VectorXd x = members.row(i).transpose();
    const auto u = feedforward(b, B_pinv, x, pred.mean.row(i).transpose());
    if (!u) continue;
    const Eigen::VectorXd d = current - x;
    rows.push_back(i);
    inputs.push_back(*u);
    admissible.push_back(d.dot(P * d) <= b.config.level_fraction * max_level_set(P, b.state_box.shifted(x)));
  }

  TargetChoice choice;
  const bool any_admissible = std::find(admissible.begin(), admissible.end(), true) != admissible.end();
  if (!any_admissible) {
    choice.target = previous;
    const Prediction p = model.predict_calibrated(previous);
    choice.u_ff = b.input_box.clamp(-B_pinv * (b.model.A * previous + p.mean));
    choice.fallback = true;
    aggregate(model, p, choice.mu, choice.sigma);
    return choice;
  }

  Eigen::MatrixXd candidates(static_cast<Eigen::Index>(rows.size()), members.cols());
  Eigen::VectorXd score(candidates.rows());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    candidates.row(static_cast<Eigen::Index>(k)) = members.row(rows[k]);
    double mu = 0.0, sigma = 0.0;
    aggregate(model, {pred.mean.row(rows[k]).transpose(), pred.stddev.row(rows[k]).transpose()}, mu, sigma);
    score[static_cast<Eigen::Index>(k)] = sigma;
  }
  // The UCB goal may lie beyond one admissible move; then the admissible
  // equilibrium closest to it is the waypoint for this iteration.
  const Eigen::Index goal = select_target(candidates, score, beta, current);
  Eigen::Index best = goal;
  if (!admissible[static_cast<std::size_t>(goal)]) {
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < candidates.rows(); ++k) {
      if (!admissible[static_cast<std::size_t>(k)]) continue;
      const double d = (candidates.row(k) - candidates.row(goal)).norm();
      if (d < best_d || (d == best_d && score[k] > score[best])) {
        best_d = d;
        best = k;
      }
    }
  }
  const Eigen::Index row = rows[static_cast<std::size_t>(best)];
  choice.target = members.row(row).transpose();
  choice.u_ff = inputs[static_cast<std::size_t>(best)];
  aggregate(model, {pred.mean.row(row).transpose(), pred.stddev.row(row).transpose()}, choice.mu, choice.sigma);
  return choice;
}

Eigen::MatrixXd eval_grid(const Benchmark& b) {
  auto rng = make_stream(b.config.seed, "eval-grid");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index n = b.x_op.size();
  Eigen::MatrixXd X(b.config.eval_points, n);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      X(i, j) = b.eval_box.lower[j] + (b.eval_box.upper[j] - b.eval_box.lower[j]) * unit(rng);
    }
  }
  return X;
}

void evaluate(const Benchmark& b, const ResidualModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& G,
              IterationRecord& rec) {
  const BatchPrediction p = model.predict(X);
  const auto& channels = model.options().learned_channels;
  const Eigen::Index rows = X.rows();
  Eigen::VectorXd pred(rows * static_cast<Eigen::Index>(channels.size()));
  Eigen::VectorXd truth(pred.size());
  Eigen::VectorXd sd(pred.size());
  Eigen::Index k = 0;
  for (Eigen::Index ch : channels) {
    for (Eigen::Index i = 0; i < rows; ++i, ++k) {
      pred[k] = p.mean(i, ch);
      truth[k] = G(i, ch);
      sd[k] = p.stddev(i, ch);
    }
  }
  rec.rmse = rmse(pred, truth);
  rec.mae = mae(pred, truth);
  rec.r2 = r2(pred, truth);
  rec.coverage = coverage(truth - pred, sd);
  rec.sigma_bar = sd.mean();
  rec.mpiw = mpiw(rec.sigma_bar);
  rec.calibration_error = calibration_error(rec.coverage);
  (void)b;
}

// Flat index of the grid node nearest to x, or -1 outside the grid box.
Eigen::Index nearest_node(const GridSpec& grid, const Eigen::VectorXd& x) {
  if (!grid.box.contains(x)) return -1;
  Eigen::Index flat = 0;
  for (std::size_t i = 0; i < grid.resolution.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const Eigen::Index r = grid.resolution[i];
    const double span = grid.box.upper[j] - grid.box.lower[j];
    const double pos = span > 0.0 ? (x[j] - grid.box.lower[j]) / span * static_cast<double>(r - 1) : 0.0;
    const auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::lround(pos)), 0, r - 1);
    flat = flat * r + k;
  }
  return flat;
}

Eigen::VectorXd learned_indicator(const Benchmark& b) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(b.x_op.size());
  for (Eigen::Index ch : b.model_options.learned_channels) w[ch] = 1.0;
  return w;
}

}  // namespace

Benchmark make_benchmark(const ExperimentConfig& c) {
  Benchmark b;
  b.config = c;
  const Box state{to_vector(c.state_lower), to_vector(c.state_upper)};
  const Box input{to_vector(c.input_lower), to_vector(c.input_upper)};
  b.x_op = to_vector(c.operating_state);
  if (c.plant == "poly2d") {
    b.plant = std::make_unique<PolynomialPlant>(c.dt, state, input);
    const Eigen::VectorXd drift = b.plant->deriv(b.x_op, Eigen::VectorXd::Zero(1), 0.0);
    b.u_op = Eigen::VectorXd::Constant(1, -drift[1]);
    b.w_op = 0.0;
  } else if (c.plant == "tank3") {
    TankParams p;
    p.areas = to_vector(c.areas);
    p.outlet_area = c.outlet_area;
    p.outlet_discharge = c.outlet_discharge;
    p.coupling_area_12 = c.coupling_area_12;
    p.coupling_area_23 = c.coupling_area_23;
    p.coupling_discharge = c.coupling_discharge;
    p.gravity = c.gravity;
    p.h_min = c.h_min;
    p.h_max = c.h_max;
    p.tank_height = c.tank_height;
    p.band_low = c.band_low;
    p.band_high = c.band_high;
    p.max_valve_rate = c.max_valve_rate;
    p.dt = c.dt;
    p.pump = {c.pump_mean, c.pump_sigma_eps, c.pump_rho_d, c.pump_sigma_d};
    p.sensor_stddev = c.sensor_stddev;
    auto tank = std::make_unique<TankPlant>(p);
    b.w_op = c.pump_mean;
    b.u_op = tank->steady_valves(b.x_op, b.w_op);
    b.plant = std::move(tank);
    b.stochastic_pump = true;
    b.pump = p.pump;
  } else {
    throw std::invalid_argument("unknown plant '" + c.plant + "'");
  }
  const Eigen::Index n = b.x_op.size();

  b.state_box = state.shifted(b.x_op);
  b.input_box = input.shifted(b.u_op);
  b.eval_box = Box{to_vector(c.eval_box_lower), to_vector(c.eval_box_upper)}.shifted(b.x_op);
  if (!b.state_box.contains(Eigen::VectorXd::Zero(n))) throw std::invalid_argument("operating point outside X");
  if (!b.input_box.contains(Eigen::VectorXd::Zero(b.u_op.size()))) throw std::invalid_argument("u_op outside U");

  b.model = linearize(*b.plant, b.x_op, b.u_op, b.w_op);
  const Eigen::MatrixXd Q = to_vector(c.q_diag).asDiagonal();
  const Eigen::MatrixXd R = to_vector(c.r_diag).asDiagonal();
  b.clf = lqr(b.model, Q, R, c.lambda);

  b.sensor_cov = Eigen::MatrixXd::Identity(n, n) * c.sensor_stddev * c.sensor_stddev;
  const double meas = 2.0 * c.sensor_stddev * c.sensor_stddev / (c.dt * c.dt);

  for (int ch : c.learned_channels) b.model_options.learned_channels.push_back(ch - 1);
  b.model_options.input_scale = to_vector(c.input_scale);
  b.model_options.output_scale = to_vector(c.output_scale);
  b.model_options.sparse = c.sparse;
  b.model_options.inducing = c.inducing;
  b.model_options.inducing_seed = c.seed;

  b.obs_noise = Eigen::VectorXd::Constant(n, meas + c.noise_floor);
  for (std::size_t k = 0; k < b.model_options.learned_channels.size(); ++k) {
    const double s = b.model_options.output_scale[static_cast<Eigen::Index>(k)];
    b.obs_noise[b.model_options.learned_channels[k]] = meas + c.noise_floor * s * s;
    b.kernels.push_back(configured_kernel(c, n));
  }

  b.grid.box = b.state_box;
  b.grid.resolution.assign(static_cast<std::size_t>(n), c.grid_resolution);
  return b;
}

Eigen::VectorXd true_residual(const Benchmark& b, const Eigen::VectorXd& x) {
  return b.plant->deriv(b.x_op + x, b.u_op, b.w_op) - b.model.A * x;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> residual_observation(const LinearModel& model, const Eigen::VectorXd& y0,
                                                                 const Eigen::VectorXd& y1, const Eigen::VectorXd& u,
                                                                 double dt) {
  const Eigen::VectorXd mid = 0.5 * (y0 + y1);
  return {mid, (y1 - y0) / dt - model.A * mid - model.B * u};
}

Eigen::Index select_target(const Eigen::MatrixXd& candidates, const Eigen::VectorXd& score, double beta,
                           const Eigen::VectorXd& current) {
  if (candidates.rows() == 0) throw std::invalid_argument("certified set is empty");
  if (score.size() != candidates.rows()) throw std::invalid_argument("one score per candidate");
  Eigen::Index best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  double best_distance = -1.0;
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
    const double v = beta * score[i];
    const double d = (candidates.row(i).transpose() - current).norm();
    const double tol = 1e-12 * std::max(1.0, std::abs(best_value));
    if (best < 0 || v > best_value + tol) {
      best = i;
      best_value = v;
      best_distance = d;
    } else if (std::abs(v - best_value) <= tol && d > best_distance) {
      best = i;
      best_value = std::max(best_value, v);
      best_distance = d;
    }
  }
  return best;
}

double exploration_ratio(double beta, double sigma, double mu) { return beta * sigma / std::abs(mu); }

PcisPredicate make_predicate(const Benchmark& b, const ResidualModel& model, double beta, double eta,
                             const Eigen::VectorXd& center) {
  PcisPredicate p;
  p.A = b.model.A;
  p.B = b.model.B;
  p.P = b.clf.P;
  p.center = center;
  p.beta = beta;
  p.lambda = b.clf.decay;
  p.margin = b.config.margin ? eta * b.plant->dt() : 0.0;
  p.state_box = b.state_box;
  p.input_box = b.input_box;
  p.residual = [model](const Eigen::VectorXd& x) { return model.predict_calibrated(x); };
  return p;
}

InitialState initialize(const Benchmark& b) {
  const ExperimentConfig& c = b.config;
  const Eigen::Index n = b.x_op.size();
  const Eigen::Index m = b.u_op.size();
  const double dt = b.plant->dt();
  auto sample_rng = make_stream(c.seed, "initial-data");
  auto meas_rng = make_stream(c.seed, "pilot-measurement");
  auto pump_rng = make_stream(c.seed, "pilot-pump");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto N = static_cast<Eigen::Index>(c.initial_samples);
  ObservationBuffer buf;
  InitialState init;
  init.pilot_states.resize(N, n);
  init.pilot_inputs.resize(N, m);
  const Eigen::MatrixXd& K = b.clf.K;

  if (!b.stochastic_pump) {
    // Scattered single steps from states drawn in the initial box.
    const Box box{to_vector(c.initial_box_lower), to_vector(c.initial_box_upper)};
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::VectorXd x0(n);
      for (Eigen::Index j = 0; j < n; ++j) x0[j] = box.lower[j] + (box.upper[j] - box.lower[j]) * unit(sample_rng);
      const Eigen::VectorXd u = b.input_box.clamp(-K * x0);
      const Eigen::VectorXd y0 = measure(x0, b.sensor_cov, meas_rng);
      const Eigen::VectorXd y1 = measure(simulate(b, x0, u, b.w_op), b.sensor_cov, meas_rng);
      buf.add(residual_observation(b.model, y0, y1, u, dt));
      init.pilot_states.row(i) = (b.x_op + x0).transpose();
      init.pilot_inputs.row(i) = (b.u_op + u).transpose();
    }
  } else {
    // A pilot trajectory around the operating point with switched valve excitation.
    Eigen::VectorXd x = to_vector(c.initial_state) - b.x_op;
    Eigen::VectorXd y = measure(x, b.sensor_cov, meas_rng);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    DisturbanceState d;
    for (Eigen::Index i = 0; i < N; ++i) {
      if (i % 10 == 0) {
        for (Eigen::Index j = 0; j < m; ++j) e[j] = c.pilot_valve_amplitude * (2.0 * unit(sample_rng) - 1.0);
      }
      const Eigen::VectorXd u = b.input_box.clamp(-K * y + e);
      const auto [w, next_d] = pump_inflow(b.pump, d, pump_rng);
      d = next_d;
      const Eigen::VectorXd x1 = simulate(b, x, u, w);
      const Eigen::VectorXd y1 = measure(x1, b.sensor_cov, meas_rng);
      buf.add(residual_observation(b.model, y, y1, u, dt));
      init.pilot_states.row(i) = (b.x_op + x).transpose();
      init.pilot_inputs.row(i) = (b.u_op + u).transpose();
      x = x1;
      y = y1;
    }
  }
  init.data = buf.dataset(b.obs_noise);

  // Held-out split for the first calibration factor.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
  auto split_rng = make_stream(c.seed, "split");
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::lround(c.validation_fraction * static_cast<double>(N)));
  const std::vector<Eigen::Index> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Eigen::Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());

  const ResidualModel probe = ResidualModel::build(init.data.subset(train), b.kernels, b.model_options);
  const GammaResult g = calibrate(probe, init.data.subset(val), c);
  init.calibration_coverage_raw = g.raw;
  init.calibration_coverage = g.calibrated;
  init.model = ResidualModel::build(init.data, b.kernels, b.model_options).with_gamma(g.gamma);

  init.eta = estimate_eta(*b.plant, b.model, b.clf, init.pilot_states, init.pilot_inputs, b.w_op, c.eta_factor);
  init.beta = beta_for(b, 1);
  const PcisPredicate pred = make_predicate(b, init.model, init.beta, init.eta, Eigen::VectorXd::Zero(n));
  const ResidualModel& model = init.model;
  init.set = certify_grid(pred, b.grid, [&model](const Eigen::MatrixXd& X) { return model.predict_calibrated(X); });
  return init;
}

RunLog run_safe(const ExperimentConfig& c) {
  const Benchmark b = make_benchmark(c);
  const Eigen::Index n = b.x_op.size();
  const Eigen::Index m = b.u_op.size();
  const double dt = b.plant->dt();

  RunLog log;
  log.plant = c.plant;
  log.safe = true;
  log.x_op = b.x_op;

  Stopwatch init_watch;
  InitialState init = initialize(b);
  const double init_seconds = init_watch.seconds();
  log.eta = init.eta;
  log.initial_set = init.set;
  log.final_set = init.set;

  const Eigen::MatrixXd X_eval = eval_grid(b);
  Eigen::MatrixXd G_eval(X_eval.rows(), n);
  for (Eigen::Index i = 0; i < X_eval.rows(); ++i) G_eval.row(i) = true_residual(b, X_eval.row(i).transpose()).transpose();

  auto meas_rng = make_stream(c.seed, "measurement");
  auto pump_rng = make_stream(c.seed, "pump");
  DisturbanceState dist;

  Dataset data = init.data;
  std::vector<Kernel> kernels = b.kernels;
  ResidualModel model = init.model;
  ObservationBuffer pending;

  Eigen::VectorXd x = to_vector(c.initial_state) - b.x_op;
  Eigen::VectorXd y = measure(x, b.sensor_cov, meas_rng);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(m);
  double t = 0.0;
  const Eigen::VectorXd w_dir = learned_indicator(b);
  if (!b.state_box.contains(x)) ++log.violations;

  for (int k = 1; k <= c.iterations; ++k) {
    IterationRecord rec;
    rec.iteration = k;
    Stopwatch fit_watch;
    if (k == 1) {
      rec.gamma = model.gamma();
      rec.calibration_coverage_raw = init.calibration_coverage_raw;
      rec.calibration_coverage = init.calibration_coverage;
    } else {
      const Dataset fresh = pending.dataset(b.obs_noise);
      const GammaResult g = calibrate(model, fresh, c);
      data.append(fresh.inputs, fresh.targets);
      pending = {};
      FitOptions fo;
      fo.fit_hyperparameters = c.fit && c.refit_every > 0 && (k - 1) % c.refit_every == 0;
      fo.restarts = c.restarts;
      fo.max_evaluations = c.max_evaluations;
      fo.max_fit_points = c.max_fit_points;
      fo.seed = c.seed + static_cast<std::uint64_t>(k);
      const ResidualModel next = ResidualModel::build(data, kernels, b.model_options, fo);
      kernels = next.kernels();
      model = next.with_gamma(g.gamma);
      rec.gamma = g.gamma;
      rec.calibration_coverage_raw = g.raw;
      rec.calibration_coverage = g.calibrated;
    }
    rec.fit_seconds = k == 1 ? init_seconds : fit_watch.seconds();
    rec.train_points = data.size();

    const double beta_k = beta_for(b, k);
    if (c.beta_mode == "schedule") {
      log.cumulative_risk += step_risk(c.delta, k);
      if (log.cumulative_risk > c.delta) throw std::logic_error("risk budget exceeded");
    }
    rec.beta = beta_k;
    evaluate(b, model, X_eval, G_eval, rec);

    Stopwatch cert_watch;
    CertifiedSet set;
    if (k == 1) {
      set = init.set;
    } else {
      const PcisPredicate pred0 = make_predicate(b, model, beta_k, init.eta, Eigen::VectorXd::Zero(n));
      set = certify_grid(pred0, b.grid, [&model](const Eigen::MatrixXd& X) { return model.predict_calibrated(X); });
    }
    rec.certify_seconds = cert_watch.seconds();
    rec.set_size = set.count;
    rec.alpha_m = set.alpha_m;
    log.final_set = set;
    if (set.count == 0) {
      log.iterations.push_back(rec);
      log.aborted = true;
      log.abort_reason = "certified set is empty at iteration " + std::to_string(k);
      throw CertificationCollapse(log.abort_reason, log);
    }

    TargetChoice choice;
    if (c.target_mode == "fixed") {
      choice.target = to_vector(c.targets[static_cast<std::size_t>(k - 1) % c.targets.size()]) - b.x_op;
      const Prediction p = model.predict_calibrated(choice.target);
      const Eigen::MatrixXd B_pinv = b.model.B.completeOrthogonalDecomposition().pseudoInverse();
      choice.u_ff = b.input_box.clamp(-B_pinv * (b.model.A * choice.target + p.mean));
      aggregate(model, p, choice.mu, choice.sigma);
    } else {
      choice = choose_target(b, set, model, beta_k, y, target);
    }
    rec.target = b.x_op + choice.target;
    rec.target_fallback = choice.fallback;
    rec.mu_k = choice.mu;
    rec.sigma_k = choice.sigma;
    rec.rho_k = exploration_ratio(beta_k, choice.sigma, choice.mu);
    rec.target_shift = (choice.target - y).norm();
    target = choice.target;

    Stopwatch roll_watch;
    const PcisPredicate pred = make_predicate(b, model, beta_k, init.eta, target);
    FilterSettings fs;
    fs.rho = c.rho;
    fs.explore_weight = c.explore_weight;
    fs.explore_direction = w_dir;
    for (int j = 0; j < c.steps_per_iteration; ++j) {
      const Prediction r = model.predict_calibrated(y);
      const Eigen::VectorXd u_lin = choice.u_ff - b.clf.K * (y - target);
      const SafeStep st = safe_step(pred, y, u_lin, r, fs);
      Eigen::VectorXd u = st.u;
      if (b.stochastic_pump) u = b.input_box.clamp(rate_limit(u_prev, u, c.max_valve_rate, dt));
      double w = b.w_op;
      if (b.stochastic_pump) {
        const auto [q, nd] = pump_inflow(b.pump, dist, pump_rng);
        w = q;
        dist = nd;
      }
      const Eigen::VectorXd g_true =
          b.plant->deriv(b.x_op + x, b.u_op + u, w) - b.model.A * x - b.model.B * u;
      bool envelope = false;
      for (Eigen::Index ch : b.model_options.learned_channels) {
        if (std::abs(g_true[ch] - r.mean[ch]) > beta_k * r.stddev[ch]) envelope = true;
      }

      const Eigen::VectorXd x1 = simulate(b, x, u, w);
      const Eigen::VectorXd y1 = measure(x1, b.sensor_cov, meas_rng);
      if (j % c.record_stride == 0) pending.add(residual_observation(b.model, y, y1, u, dt));
      t += dt;

      StepRecord s;
      s.t = t;
      s.iteration = k;
      s.x = b.x_op + x1;
      s.u = b.u_op + u;
      s.target = b.x_op + target;
      s.s = st.s;
      s.b = st.diagnostics.b;
      s.margin = st.diagnostics.margin;
      s.beta = beta_k;
      s.sigma_agg = st.diagnostics.sigma_agg;
      s.intervened = st.diagnostics.intervened;
      s.violation = !b.state_box.contains(x1) || !b.input_box.contains(u);
      s.envelope_violation = envelope;
      log.violations += s.violation;
      log.envelope_violations += envelope;
      const Eigen::Index node = nearest_node(set.grid, x1);
      if (node < 0 || !set.members[static_cast<std::size_t>(node)]) ++log.set_exits;
      if (b.clf.value(x1) > set.alpha_m) ++log.ellipsoid_exits;
      log.steps.push_back(std::move(s));

      x = x1;
      y = y1;
      u_prev = u;
    }
    rec.rollout_seconds = roll_watch.seconds();
    log.iterations.push_back(rec);
  }
  return log;
}

// Deviation magnitude beyond which the open baseline is declared divergent.
constexpr double kDivergence = 1e6;

RunLog run_unsafe_baseline(const ExperimentConfig& c) {
  const Benchmark b = make_benchmark(c);
  const Eigen::Index n = b.x_op.size();
  const double dt = b.plant->dt();

  RunLog log;
  log.plant = c.plant;
  log.safe = false;
  log.x_op = b.x_op;
  const InitialState init = initialize(b);
  log.eta = init.eta;
  log.initial_set = init.set;
  log.final_set = init.set;

  std::vector<Eigen::VectorXd> targets;
  for (const auto& tg : c.unsafe_targets.empty() ? c.targets : c.unsafe_targets) targets.push_back(to_vector(tg) - b.x_op);
  if (targets.empty()) targets.push_back(Eigen::VectorXd::Zero(n));
  const Eigen::MatrixXd B_pinv = b.model.B.completeOrthogonalDecomposition().pseudoInverse();

  auto meas_rng = make_stream(c.seed, "measurement");
  auto pump_rng = make_stream(c.seed, "pump");
  auto excite_rng = make_stream(c.seed, "excitation");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DisturbanceState dist;
  Eigen::VectorXd x = to_vector(c.initial_state) - b.x_op;
  Eigen::VectorXd y = measure(x, b.sensor_cov, meas_rng);
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(b.u_op.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(b.u_op.size());
  double t = 0.0;

  for (int k = 1; k <= c.iterations; ++k) {
    const Eigen::VectorXd target = targets[static_cast<std::size_t>(k - 1) % targets.size()];
    const Eigen::VectorXd u_ff = -B_pinv * (b.model.A * target + init.model.predict(target).mean);
    IterationRecord rec;
    rec.iteration = k;
    rec.set_size = init.set.count;
    rec.alpha_m = init.set.alpha_m;
    rec.train_points = init.data.size();
    rec.target = b.x_op + target;
    rec.target_shift = (target - y).norm();
    Stopwatch roll_watch;
    for (int j = 0; j < c.steps_per_iteration; ++j) {
      // persistent excitation, redrawn every 10 steps as in the pilot
      if (j % 10 == 0) {
        for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = c.pilot_valve_amplitude * (2.0 * unit(excite_rng) - 1.0);
      }
      Eigen::VectorXd u = b.input_box.clamp(u_ff - b.clf.K * (y - target) + e);
      if (b.stochastic_pump) u = b.input_box.clamp(rate_limit(u_prev, u, c.max_valve_rate, dt));
      double w = b.w_op;
      if (b.stochastic_pump) {
        const auto [q, nd] = pump_inflow(b.pump, dist, pump_rng);
        w = q;
        dist = nd;
      }
      const Eigen::VectorXd x1 = simulate(b, x, u, w);
      if (!x1.allFinite() || x1.cwiseAbs().maxCoeff() > kDivergence) {
        log.aborted = true;
        log.abort_reason = "state diverged at t = " + csv_number(t + dt);
        break;
      }
      const Eigen::VectorXd y1 = measure(x1, b.sensor_cov, meas_rng);
      t += dt;

      StepRecord s;
      s.t = t;
      s.iteration = k;
      s.x = b.x_op + x1;
      s.u = b.u_op + u;
      s.target = b.x_op + target;
      s.violation = !b.state_box.contains(x1) || !b.input_box.contains(u);
      log.violations += s.violation;
      const Eigen::Index node = nearest_node(init.set.grid, x1);
      if (node < 0 || !init.set.members[static_cast<std::size_t>(node)]) ++log.set_exits;
      if (b.clf.value(x1) > init.set.alpha_m) ++log.ellipsoid_exits;
      log.steps.push_back(std::move(s));
      x = x1;
      y = y1;
      u_prev = u;
    }
    rec.rollout_seconds = roll_watch.seconds();
    log.iterations.push_back(rec);
    if (log.aborted) break;
  }
  return log;
}

void write_iteration_csv(std::ostream& out, const RunLog& log) {
  write_csv_row(out, std::vector<std::string>{"Iter", "|S|", "RMSE", "MAE", "R^2", "Coverage", "sigma_bar", "Train pts"});
  for (const IterationRecord& r : log.iterations) {
    write_csv_row(out, std::vector<std::string>{std::to_string(r.iteration), std::to_string(r.set_size),
                                                csv_number(r.rmse), csv_number(r.mae), csv_number(r.r2),
                                                csv_number(r.coverage), csv_number(r.sigma_bar),
                                                std::to_string(r.train_points)});
  }
}

void write_derived_csv(std::ostream& out, const RunLog& log) {
  write_csv_row(out, std::vector<std::string>{"Iter", "Cal. Err.", "MPIW", "mu_k", "sigma_k", "rho_k",
                                              "||x*_k - x_{k-1}||"});
  for (const IterationRecord& r : log.iterations) {
    write_csv_row(out, std::vector<std::string>{std::to_string(r.iteration), csv_number(r.calibration_error),
                                                csv_number(r.mpiw), csv_number(r.mu_k), csv_number(r.sigma_k),
                                                csv_number(r.rho_k), csv_number(r.target_shift)});
  }
}

void write_calibration_csv(std::ostream& out, const RunLog& log) {
  write_csv_row(out, std::vector<std::string>{"Iter", "gamma", "coverage_raw", "coverage_calibrated", "beta"});
  for (const IterationRecord& r : log.iterations) {
    write_csv_row(out, std::vector<std::string>{std::to_string(r.iteration), csv_number(r.gamma),
                                                csv_number(r.calibration_coverage_raw),
                                                csv_number(r.calibration_coverage), csv_number(r.beta)});
  }
}

void write_steps_csv(std::ostream& out, const RunLog& log) {
  if (log.steps.empty()) return;
  const Eigen::Index n = log.steps.front().x.size();
  const Eigen::Index m = log.steps.front().u.size();
  std::vector<std::string> header{"t", "iter"};
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("x" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < m; ++i) header.push_back("u" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("target" + std::to_string(i + 1));
  for (const char* h : {"s", "b", "margin", "beta", "sigma_agg", "intervened", "violation", "envelope_violation"}) {
    header.emplace_back(h);
  }
  write_csv_row(out, header);
  std::vector<std::string> row;
  for (const StepRecord& s : log.steps) {
    row.clear();
    row.push_back(csv_number(s.t));
    row.push_back(std::to_string(s.iteration));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(csv_number(s.x[i]));
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(csv_number(s.u[i]));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(csv_number(s.target[i]));
    for (double v : {s.s, s.b, s.margin, s.beta, s.sigma_agg}) row.push_back(csv_number(v));
    for (bool v : {s.intervened, s.violation, s.envelope_violation}) row.push_back(v ? "1" : "0");
    write_csv_row(out, row);
  }
}

void write_summary(std::ostream& out, const RunLog& log) {
  out << "plant: " << log.plant << "\n";
  out << "mode: " << (log.safe ? "safe" : "unsafe") << "\n";
  out << "iterations: " << log.iterations.size() << "\n";
  out << "steps: " << log.steps.size() << "\n";
  out << "violations: " << log.violations << "\n";
  out << "envelope violations: " << log.envelope_violations << "\n";
  out << "certified set exits: " << log.set_exits << "\n";
  out << "ellipsoid exits: " << log.ellipsoid_exits << "\n";
  out << "eta: " << csv_number(log.eta) << "\n";
  out << "|S| initial: " << log.initial_set.count << "\n";
  out << "|S| final: " << log.final_set.count << "\n";
  if (log.safe && !log.iterations.empty()) {
    const double first = log.iterations.front().rmse;
    const double last = log.iterations.back().rmse;
    out << "RMSE first: " << csv_number(first) << "\n";
    out << "RMSE last: " << csv_number(last) << "\n";
    out << "RMSE reduction: " << csv_number(first > 0.0 ? 1.0 - last / first : 0.0) << "\n";
  }
  if (!log.steps.empty()) {
    Eigen::VectorXd times(static_cast<Eigen::Index>(log.steps.size()));
    Eigen::MatrixXd X(times.size(), log.steps.front().x.size());
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      times[i] = log.steps[static_cast<std::size_t>(i)].t;
      X.row(i) = log.steps[static_cast<std::size_t>(i)].x.transpose();
    }
    out << "state range lower: " << X.colwise().minCoeff() << "\n";
    out << "state range upper: " << X.colwise().maxCoeff() << "\n";
  }
  if (log.aborted) out << "aborted: " << log.abort_reason << "\n";
  out << "timings (s):\n";
  for (const IterationRecord& r : log.iterations) {
    out << "  iter " << r.iteration << ": fit " << csv_number(r.fit_seconds, 4) << ", certify "
        << csv_number(r.certify_seconds, 4) << ", rollout " << csv_number(r.rollout_seconds, 4) << "\n";
  }
}

}  // namespace gppcis
