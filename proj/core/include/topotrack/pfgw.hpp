#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "topotrack/measure_net.hpp"
#include "topotrack/partial_ot.hpp"

namespace topotrack {

struct PfgwOptions {
  double alpha = 0.5;  // weight of the structural term, in [0, 1]
  double m = 1.0;      // transported mass, in (0, 1]
  int q = 2;           // only q = 2 is supported (closed-form line search)
  int max_iterations = 200;
  double relative_tolerance = 1e-9;
  /// Divide attribute distances and tree distances by their maxima before fusing.
  bool normalize = false;
  /// Warm start; defaults to m * p1 p2^T. Must be feasible for (p1, p2, m).
  std::optional<Eigen::MatrixXd> initial;
};

struct PfgwResult {
  double distance_q = 0.0;  // objective at the returned coupling
  Coupling coupling;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each iterate, starting with C0
};

/// Fused cost terms for a pair of networks (after optional normalisation).
struct PfgwProblem {
  Eigen::MatrixXd attribute_cost;  // d_A(a_i, b_j)^q
  Eigen::MatrixXd W1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd p1;
  Eigen::VectorXd p2;
  double alpha = 0.5;
};

PfgwProblem make_pfgw_problem(const MeasureNetwork& a, const MeasureNetwork& b, double alpha,
                              int q = 2, bool normalize = false);

/// L(C)_{ij} = sum_{k,l} (W1(i,k) - W2(j,l))^2 C_{kl}, via matrix products.
Eigen::MatrixXd structure_tensor_product(const PfgwProblem& problem, const Eigen::MatrixXd& C);

/// (1 - alpha) <D, C> + alpha <L(C), C>.
double pfgw_objective(const PfgwProblem& problem, const Eigen::MatrixXd& C);

/// Conditional gradient on the relaxed couplings with exact line search.
/// The problem is nonconvex; the result is a stationary point.
PfgwResult solve_pfgw(const MeasureNetwork& a, const MeasureNetwork& b, const PfgwOptions& options);
PfgwResult solve_pfgw(const PfgwProblem& problem, const PfgwOptions& options);

struct MassSearch {
  double m_low = 0.6;
  double m_high = 0.9;
  double step = 0.05;
  double max_match_km = 27.0;
  double mass_epsilon = 1e-6;  // entries at or above this count as a match
  bool normalize = false;
};

struct MassSelection {
  double m = 0.0;
  PfgwResult result;
  /// No m in range passed the distance screen; the lowest m was kept with
  /// the offending entries zeroed.
  bool fallback = false;
  std::size_t zeroed_entries = 0;
};

/// Highest m (descending from m_high by `step`) whose coupling matches no
/// pair of nodes farther apart than max_match_km.
MassSelection auto_select_mass(const MeasureNetwork& a, const MeasureNetwork& b, double alpha,
                               const MassSearch& search);

/// Mass values visited by auto_select_mass, highest first.
std::vector<double> mass_grid(const MassSearch& search);

/// speed (m/s) * interval (min) in km.
double max_match_distance_km(double speed_m_per_s, double interval_minutes);

}  // namespace topotrack
