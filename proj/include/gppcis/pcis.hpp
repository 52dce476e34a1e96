#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "gppcis/control.hpp"
#include "gppcis/gp.hpp"
#include "gppcis/plants.hpp"

namespace gppcis {

/// Residual query used by the safety logic: mean and calibrated stddev on
/// the full state vector.
using ResidualQuery = std::function<Prediction(const Eigen::VectorXd&)>;

/// Robust CLF decrease condition, everything in deviation coordinates.
///
/// With V(x) = (x - c)^T P (x - c), the condition at x for input u reads
///   grad V^T (A x + B u + mu(x)) + beta sum_i sigma_i(x) |grad V_i| + lambda V(x) + margin <= 0.
struct PcisPredicate {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd P;
  Eigen::VectorXd center;  // empty means the origin
  double beta = 2.0;
  double lambda = 0.0;
  double margin = 0.0;     // discretisation allowance, in V per second
  Box state_box;
  Box input_box;
  ResidualQuery residual;  // empty means mu = sigma = 0
};

/// Constraint row in the form a^T u + b <= 0 (before slack).
struct ClfConstraint {
  Eigen::VectorXd a;
  double b = 0.0;
  double value = 0.0;  // V(x)
};

/// The affine-in-u constraint at x for a given residual prediction.
ClfConstraint clf_constraint(const PcisPredicate& pred, const Eigen::VectorXd& x, const Prediction& residual);

struct Membership {
  bool member = false;
  Eigen::VectorXd witness;  // minimising input when member
  double value = 0.0;       // min over u of the left-hand side
};

/// Minimises the left-hand side over the input box (a box vertex chosen by
/// the sign of a = B^T grad V). States outside the state box are never members.
Membership is_member(const PcisPredicate& pred, const Eigen::VectorXd& x);
Membership is_member(const PcisPredicate& pred, const Eigen::VectorXd& x, const Prediction& residual);

/// Regular grid over a box, `resolution[i]` nodes along axis i (row-major,
/// last axis fastest).
struct GridSpec {
  Box box;
  std::vector<Eigen::Index> resolution;

  Eigen::Index size() const;
  Eigen::VectorXd node(Eigen::Index flat) const;
  Eigen::MatrixXd nodes() const;
};

struct CertifiedSet {
  GridSpec grid;
  std::vector<std::uint8_t> members;
  double alpha_m = 0.0;
  Eigen::Index count = 0;

  Eigen::MatrixXd member_points() const;
};

/// Batch residual query over many states (rows); used by certify_grid.
using BatchResidualQuery = std::function<BatchPrediction(const Eigen::MatrixXd&)>;

/// Membership of every grid node; throws for grids with more than 1e7 nodes
/// or fewer than 20 nodes per axis.
CertifiedSet certify_grid(const PcisPredicate& pred, const GridSpec& grid, const BatchResidualQuery& residual = {});

/// Largest alpha with {x^T P x <= alpha} inside the box (origin must be inside).
double max_level_set(const Eigen::MatrixXd& P, const Box& box);

/// eta = factor * max |dV_rk4 - dV_euler| / dt^2 over pilot (x, u) pairs given in
/// physical coordinates; V is centred at the model operating point.
double estimate_eta(const Plant& plant, const LinearModel& model, const Clf& clf, const Eigen::MatrixXd& states,
                    const Eigen::MatrixXd& inputs, double w, double factor = 2.0);

struct CertifiedSummary {
  Eigen::Index count = 0;
  double alpha_m = 0.0;
  Eigen::VectorXd lower;   // axis-aligned member ranges
  Eigen::VectorXd upper;
  Eigen::VectorXd centre;  // mean member
  double max_distance = 0.0;
};

/// `offset` is added to coordinates (to report physical levels).
CertifiedSummary summarize(const CertifiedSet& set, const Eigen::VectorXd& offset);
void write_certified_csv(std::ostream& out, const CertifiedSet& set, const Eigen::VectorXd& offset);

}  // namespace gppcis
