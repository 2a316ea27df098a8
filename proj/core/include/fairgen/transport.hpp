#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fairgen {

struct Assignment {
  /// row_to_col[i] is the column matched to row i.
  std::vector<int> row_to_col;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials, O(n^3)).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

struct TransportPlan {
  Eigen::MatrixXd plan;
  double cost = 0.0;
  /// Dual potentials: cost(i,j) - u(i) - v(j) >= 0 everywhere, with
  /// equality on the support of the plan.
  Eigen::VectorXd u, v;
  int pivots = 0;
};

/// Exact transportation problem min <cost, P> s.t. P 1 = supply,
/// P^T 1 = demand, P >= 0 (transportation simplex from the north-west
/// corner basis). Supply and demand must be nonnegative with equal totals.
TransportPlan solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                              const Eigen::VectorXd& demand);

/// Exact linear OT. Dispatches to solve_assignment when both marginals are
/// uniform over the same number of points, otherwise to solve_transport.
Eigen::MatrixXd solve_linear_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& h, const Eigen::VectorXd& g);

}  // namespace fairgen
