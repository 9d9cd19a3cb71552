#pragma once

#include <Eigen/Dense>

namespace topotrack {

/// Nonnegative n1 x n2 transport plan of total mass `mass`.
struct Coupling {
  Eigen::MatrixXd matrix;
  double mass = 0.0;
};

/// Exact balanced transportation problem: min <cost, X> subject to
/// X 1 = supply, X^T 1 = demand, X >= 0. Requires sum(supply) == sum(demand)
/// (to 1e-9 relative). Solved with a transportation network simplex
/// (spanning-tree basis, Dantzig pricing with a Bland fallback on stalling).
Eigen::MatrixXd solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                                const Eigen::VectorXd& demand);

/// Exact minimiser of <cost, C> over the relaxed couplings
///   { C >= 0 : C 1 <= p1, C^T 1 <= p2, 1^T C 1 = m }.
/// One virtual row and column with zero cost absorb the unmatched masses
/// sum(p2) - m and sum(p1) - m; the virtual/virtual cell is forbidden.
Coupling solve_partial_linear_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p1,
                                 const Eigen::VectorXd& p2, double m);

struct FeasibilityReport {
  double row_excess = 0.0;   // max_i (C 1 - p1)_i, clipped below at 0
  double col_excess = 0.0;   // max_j (C^T 1 - p2)_j, clipped below at 0
  double mass_error = 0.0;   // |1^T C 1 - m|
  double min_entry = 0.0;

  bool ok(double tol) const {
    return row_excess <= tol && col_excess <= tol && mass_error <= tol && min_entry >= -tol;
  }
};

FeasibilityReport check_feasibility(const Eigen::MatrixXd& C, const Eigen::VectorXd& p1,
                                    const Eigen::VectorXd& p2, double m);

}  // namespace topotrack
