#include "gppcis/safe_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gppcis {

namespace {

Eigen::VectorXd linear_term(const QpProblem& p) {
  return p.linear.size() ? p.linear : Eigen::VectorXd::Zero(p.u_lin.size());
}

bool lexicographically_less(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < y[i]) return true;
    if (x[i] > y[i]) return false;
  }
  return false;
}

void validate(const QpProblem& p) {
  const Eigen::Index m = p.u_lin.size();
  if (p.R_s.rows() != m || p.R_s.cols() != m || p.a.size() != m || p.u_min.size() != m || p.u_max.size() != m ||
      (p.linear.size() != 0 && p.linear.size() != m)) {
    throw std::invalid_argument("inconsistent QP dimensions");
  }
  if (!(p.rho > 0.0)) throw std::invalid_argument("slack penalty must be positive");
  if ((p.u_max - p.u_min).minCoeff() < 0.0) throw std::invalid_argument("empty input box");
}

}  // namespace

double qp_objective(const QpProblem& p, const Eigen::VectorXd& u, double s) {
  const Eigen::VectorXd d = u - p.u_lin;
  return d.dot(p.R_s * d) + p.rho * s + linear_term(p).dot(u);
}

double kkt_residual(const QpProblem& p, const Eigen::VectorXd& u, double s, double* multiplier) {
  const Eigen::Index m = u.size();
  const Eigen::MatrixXd H = p.R_s + p.R_s.transpose();
  const Eigen::VectorXd grad0 = H * u - H * p.u_lin + linear_term(p);
  const double c = p.a.dot(u) + p.b - s;
  const double tol = 1e-12;

  const double g_scale = 1.0 + grad0.cwiseAbs().maxCoeff() + p.rho * p.a.cwiseAbs().maxCoeff();
  const double c_scale = 1.0 + std::abs(p.b) + p.a.cwiseAbs().dot(u.cwiseAbs()) + s;

  double primal = std::max({0.0, c, -s});
  for (Eigen::Index j = 0; j < m; ++j) primal = std::max({primal, p.u_min[j] - u[j], u[j] - p.u_max[j]});
  primal /= c_scale;

  auto dual = [&](double nu) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double g = grad0[j] + nu * p.a[j];
      const bool at_lo = u[j] <= p.u_min[j] + tol * (1.0 + std::abs(p.u_min[j]));
      const bool at_hi = u[j] >= p.u_max[j] - tol * (1.0 + std::abs(p.u_max[j]));
      double v = 0.0;
      if (at_lo && at_hi) v = 0.0;
      else if (at_lo) v = std::max(0.0, -g);
      else if (at_hi) v = std::max(0.0, g);
      else v = std::abs(g);
      worst = std::max(worst, v / g_scale);
    }
    const double mu_s = p.rho - nu;
    worst = std::max(worst, mu_s * s / (p.rho * c_scale));
    worst = std::max(worst, nu * std::abs(std::min(c, 0.0)) / (p.rho * c_scale));
    return worst;
  };

  std::vector<double> candidates{0.0, p.rho};
  for (Eigen::Index j = 0; j < m; ++j) {
    if (p.a[j] != 0.0) candidates.push_back(std::clamp(-grad0[j] / p.a[j], 0.0, p.rho));
  }
  double best = std::numeric_limits<double>::infinity();
  double best_nu = 0.0;
  for (double nu : candidates) {
    const double r = dual(nu);
    if (r < best) {
      best = r;
      best_nu = nu;
    }
  }
  if (multiplier) *multiplier = best_nu;
  return std::max(primal, best);
}

QpSolution solve_qp(const QpProblem& p) {
  validate(p);
  const Eigen::Index m = p.u_lin.size();
  const Eigen::VectorXd q = linear_term(p);
  const Eigen::MatrixXd H = p.R_s + p.R_s.transpose();

  auto finish = [&](QpSolution sol) {
    sol.bound_state.assign(static_cast<std::size_t>(m), 0);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (sol.u[j] <= p.u_min[j]) sol.bound_state[static_cast<std::size_t>(j)] = -1;
      else if (sol.u[j] >= p.u_max[j]) sol.bound_state[static_cast<std::size_t>(j)] = 1;
    }
    sol.objective = qp_objective(p, sol.u, sol.s);
    sol.constraint_active = std::abs(p.a.dot(sol.u) + p.b - sol.s) <= 1e-10 * (1.0 + std::abs(p.b));
    sol.kkt_residual = kkt_residual(p, sol.u, sol.s, &sol.multiplier);
    return sol;
  };

  // The unfiltered input is optimal whenever it is admissible.
  if (q.isZero(0.0) && (p.u_lin.array() >= p.u_min.array()).all() && (p.u_lin.array() <= p.u_max.array()).all() &&
      p.a.dot(p.u_lin) + p.b <= 0.0) {
    QpSolution sol;
    sol.u = p.u_lin;
    sol.s = 0.0;
    return finish(sol);
  }

  const double scale = 1.0 + p.u_max.cwiseAbs().maxCoeff() + p.u_min.cwiseAbs().maxCoeff();
  const double feas_tol = 1e-11 * scale;
  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_u;

  Eigen::Index patterns = 1;
  for (Eigen::Index j = 0; j < m; ++j) patterns *= 3;
  std::vector<int> state(static_cast<std::size_t>(m));

  for (int regime = 0; regime < 2; ++regime) {
    const Eigen::VectorXd g = -H * p.u_lin + q + (regime == 1 ? Eigen::VectorXd(p.rho * p.a) : Eigen::VectorXd::Zero(m));
    for (Eigen::Index code = 0; code < patterns; ++code) {
      Eigen::Index c = code;
      std::vector<Eigen::Index> free_idx;
      Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        state[static_cast<std::size_t>(j)] = static_cast<int>(c % 3) - 1;
        c /= 3;
        const int st = state[static_cast<std::size_t>(j)];
        if (st == -1) u[j] = p.u_min[j];
        else if (st == 1) u[j] = p.u_max[j];
        else free_idx.push_back(j);
      }
      const auto f = static_cast<Eigen::Index>(free_idx.size());
      for (int eq = 0; eq < 2; ++eq) {
        if (eq == 1 && f == 0) continue;
        Eigen::VectorXd cand = u;
        if (f > 0) {
          const Eigen::Index dim = f + eq;
          Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
          Eigen::VectorXd rhs(dim);
          for (Eigen::Index r = 0; r < f; ++r) {
            const Eigen::Index jr = free_idx[static_cast<std::size_t>(r)];
            for (Eigen::Index s = 0; s < f; ++s) K(r, s) = H(jr, free_idx[static_cast<std::size_t>(s)]);
            double fixed = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
              if (state[static_cast<std::size_t>(j)] != 0) fixed += H(jr, j) * u[j];
            }
            rhs[r] = -(g[jr] + fixed);
            if (eq) {
              K(r, f) = p.a[jr];
              K(f, r) = p.a[jr];
            }
          }
          if (eq) {
            double fixed = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
              if (state[static_cast<std::size_t>(j)] != 0) fixed += p.a[j] * u[j];
            }
            rhs[f] = -p.b - fixed;
          }
          const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
          if (lu.rank() < dim) continue;
          const Eigen::VectorXd sol = lu.solve(rhs);
          for (Eigen::Index r = 0; r < f; ++r) cand[free_idx[static_cast<std::size_t>(r)]] = sol[r];
        }
        if (!cand.allFinite()) continue;
        if ((cand - p.u_min).minCoeff() < -feas_tol || (p.u_max - cand).minCoeff() < -feas_tol) continue;
        cand = cand.cwiseMax(p.u_min).cwiseMin(p.u_max);
        const double slack = p.a.dot(cand) + p.b;
        const double cons_tol = 1e-10 * (1.0 + std::abs(p.b) + p.a.cwiseAbs().dot(cand.cwiseAbs()));
        if (regime == 0 && slack > cons_tol) continue;
        if (regime == 1 && slack < -cons_tol) continue;
        const double obj = qp_objective(p, cand, std::max(0.0, slack));
        const double tie = 1e-12 * (1.0 + std::abs(best_obj));
        if (best_u.size() == 0 || obj < best_obj - tie || (std::abs(obj - best_obj) <= tie && lexicographically_less(cand, best_u))) {
          best_obj = obj;
          best_u = cand;
        }
      }
    }
  }
  if (best_u.size() == 0) throw std::logic_error("no KKT candidate found for a feasible QP");
  QpSolution sol;
  sol.u = best_u;
  sol.s = std::max(0.0, p.a.dot(best_u) + p.b);
  return finish(sol);
}

QpProblem build_qp(const PcisPredicate& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& u_lin,
                   const Prediction& residual, const FilterSettings& settings) {
  const ClfConstraint c = clf_constraint(pred, x, residual);
  const Eigen::Index m = u_lin.size();
  QpProblem p;
  p.u_lin = u_lin;
  p.R_s = settings.R_s.size() ? settings.R_s : Eigen::MatrixXd::Identity(m, m);
  p.rho = settings.rho > 0.0
              ? settings.rho
              : 1e3 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p.R_s).eigenvalues().maxCoeff();
  p.a = c.a;
  p.b = c.b;
  p.u_min = pred.input_box.lower;
  p.u_max = pred.input_box.upper;
  if (settings.explore_weight > 0.0 && settings.explore_direction.size() == x.size()) {
    const Eigen::VectorXd& w = settings.explore_direction;
    p.linear = -settings.explore_weight * w.dot(residual.stddev) * (pred.B.transpose() * w);
  }
  return p;
}

SafeStep safe_step(const PcisPredicate& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& u_lin,
                   const Prediction& residual, const FilterSettings& settings) {
  const QpProblem p = build_qp(pred, x, u_lin, residual, settings);
  const QpSolution sol = solve_qp(p);
  SafeStep out;
  out.u = sol.u;
  out.s = sol.s;
  const Eigen::VectorXd d = pred.center.size() ? Eigen::VectorXd(x - pred.center) : x;
  out.diagnostics.b = p.b;
  out.diagnostics.s = sol.s;
  out.diagnostics.margin = -(p.a.dot(sol.u) + p.b);
  out.diagnostics.sigma_agg = residual.stddev.dot((2.0 * (pred.P * d)).cwiseAbs());
  out.diagnostics.intervened = sol.s > 0.0 || (sol.u - u_lin).cwiseAbs().maxCoeff() > 1e-12;
  out.diagnostics.bound_state = sol.bound_state;
  return out;
}

}  // namespace gppcis
