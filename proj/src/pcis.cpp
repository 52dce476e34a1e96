#include "gppcis/pcis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace gppcis {

ClfConstraint clf_constraint(const PcisPredicate& pred, const Eigen::VectorXd& x, const Prediction& residual) {
  const Eigen::VectorXd d = pred.center.size() ? Eigen::VectorXd(x - pred.center) : x;
  const Eigen::VectorXd grad = 2.0 * (pred.P * d);
  ClfConstraint c;
  c.value = d.dot(pred.P * d);
  c.a = pred.B.transpose() * grad;
  c.b = grad.dot(pred.A * x + residual.mean) + pred.beta * residual.stddev.dot(grad.cwiseAbs()) +
        pred.lambda * c.value + pred.margin;
  return c;
}

Membership is_member(const PcisPredicate& pred, const Eigen::VectorXd& x, const Prediction& residual) {
  Membership m;
  if (!pred.state_box.contains(x) || pred.input_box.empty()) {
    m.value = std::numeric_limits<double>::infinity();
    return m;
  }
  const ClfConstraint c = clf_constraint(pred, x, residual);
  Eigen::VectorXd u(c.a.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double lo = pred.input_box.lower[j];
    const double hi = pred.input_box.upper[j];
    if (c.a[j] > 0.0) u[j] = lo;
    else if (c.a[j] < 0.0) u[j] = hi;
    else u[j] = std::clamp(0.0, lo, hi);
  }
  m.value = c.a.dot(u) + c.b;
  m.member = m.value <= 0.0;
  if (m.member) m.witness = u;
  return m;
}

Membership is_member(const PcisPredicate& pred, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Prediction r{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  if (pred.residual && pred.state_box.contains(x)) r = pred.residual(x);
  return is_member(pred, x, r);
}

Eigen::Index GridSpec::size() const {
  Eigen::Index total = 1;
  for (Eigen::Index r : resolution) total *= r;
  return resolution.empty() ? 0 : total;
}

Eigen::VectorXd GridSpec::node(Eigen::Index flat) const {
  const auto d = static_cast<Eigen::Index>(resolution.size());
  Eigen::VectorXd x(d);
  for (Eigen::Index i = d - 1; i >= 0; --i) {
    const Eigen::Index r = resolution[static_cast<std::size_t>(i)];
    const Eigen::Index k = flat % r;
    flat /= r;
    x[i] = r == 1 ? box.lower[i]
                  : box.lower[i] + (box.upper[i] - box.lower[i]) * static_cast<double>(k) / static_cast<double>(r - 1);
  }
  return x;
}

Eigen::MatrixXd GridSpec::nodes() const {
  Eigen::MatrixXd X(size(), static_cast<Eigen::Index>(resolution.size()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) X.row(i) = node(i).transpose();
  return X;
}

Eigen::MatrixXd CertifiedSet::member_points() const {
  Eigen::MatrixXd X(count, static_cast<Eigen::Index>(grid.resolution.size()));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i]) X.row(row++) = grid.node(static_cast<Eigen::Index>(i)).transpose();
  }
  return X;
}

CertifiedSet certify_grid(const PcisPredicate& pred, const GridSpec& grid, const BatchResidualQuery& residual) {
  if (static_cast<Eigen::Index>(grid.resolution.size()) != pred.A.rows()) {
    throw std::invalid_argument("grid dimension does not match the state");
  }
  for (Eigen::Index r : grid.resolution) {
    if (r < 20) throw std::invalid_argument("grid resolution must be at least 20 per axis");
  }
  if (static_cast<double>(grid.size()) > 1e7) throw std::invalid_argument("grid exceeds 1e7 nodes");

  CertifiedSet set;
  set.grid = grid;
  set.members.assign(static_cast<std::size_t>(grid.size()), 0);
  const Eigen::MatrixXd X = grid.nodes();
  const Eigen::Index n = X.cols();
  BatchPrediction r{Eigen::MatrixXd::Zero(X.rows(), n), Eigen::MatrixXd::Zero(X.rows(), n)};
  if (residual) {
    r = residual(X);
  } else if (pred.residual) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Prediction p = pred.residual(X.row(i).transpose());
      r.mean.row(i) = p.mean.transpose();
      r.stddev.row(i) = p.stddev.transpose();
    }
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Prediction p{r.mean.row(i).transpose(), r.stddev.row(i).transpose()};
    if (is_member(pred, X.row(i).transpose(), p).member) {
      set.members[static_cast<std::size_t>(i)] = 1;
      ++set.count;
    }
  }
  const Box local = pred.center.size() ? pred.state_box.shifted(pred.center) : pred.state_box;
  set.alpha_m = max_level_set(pred.P, local);
  return set;
}

double max_level_set(const Eigen::MatrixXd& P, const Box& box) {
  if (!box.contains(Eigen::VectorXd::Zero(box.dim()))) throw std::invalid_argument("origin lies outside the box");
  const Eigen::MatrixXd Pinv = P.llt().solve(Eigen::MatrixXd::Identity(P.rows(), P.cols()));
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    const double bound = std::min(-box.lower[i], box.upper[i]);
    alpha = std::min(alpha, bound * bound / Pinv(i, i));
  }
  return alpha;
}

double estimate_eta(const Plant& plant, const LinearModel& model, const Clf& clf, const Eigen::MatrixXd& states,
                    const Eigen::MatrixXd& inputs, double w, double factor) {
  const double dt = plant.dt();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < states.rows(); ++k) {
    const Eigen::VectorXd x = states.row(k).transpose();
    const Eigen::VectorXd u = inputs.row(k).transpose();
    const Eigen::VectorXd d = x - model.x_op;
    const Eigen::VectorXd next = step_rk4(plant, x, u, dt, w) - model.x_op;
    const double dv_rk4 = clf.value(next) - clf.value(d);
    const double dv_euler = dt * clf.gradient(d).dot(plant.deriv(x, u, w));
    worst = std::max(worst, std::abs(dv_rk4 - dv_euler));
  }
  return factor * worst / (dt * dt);
}

CertifiedSummary summarize(const CertifiedSet& set, const Eigen::VectorXd& offset) {
  CertifiedSummary s;
  s.count = set.count;
  s.alpha_m = set.alpha_m;
  const Eigen::Index n = static_cast<Eigen::Index>(set.grid.resolution.size());
  if (set.count == 0) {
    s.lower = s.upper = s.centre = Eigen::VectorXd::Constant(n, std::nan(""));
    return s;
  }
  const Eigen::MatrixXd M = set.member_points().rowwise() + offset.transpose();
  s.lower = M.colwise().minCoeff().transpose();
  s.upper = M.colwise().maxCoeff().transpose();
  s.centre = M.colwise().mean().transpose();
  s.max_distance = (M.rowwise() - s.centre.transpose()).rowwise().norm().maxCoeff();
  return s;
}

void write_certified_csv(std::ostream& out, const CertifiedSet& set, const Eigen::VectorXd& offset) {
  const auto n = static_cast<Eigen::Index>(set.grid.resolution.size());
  for (Eigen::Index j = 0; j < n; ++j) out << "x" << j + 1 << ",";
  out << "member\n";
  const auto old = out.precision(10);
  for (Eigen::Index i = 0; i < set.grid.size(); ++i) {
    const Eigen::VectorXd x = set.grid.node(i) + offset;
    for (Eigen::Index j = 0; j < n; ++j) out << x[j] << ",";
    out << static_cast<int>(set.members[static_cast<std::size_t>(i)]) << "\n";
  }
  out.precision(old);
}

}  // namespace gppcis
