#include "topotrack/pfgw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "topotrack/error.hpp"

namespace topotrack {

namespace {

Eigen::MatrixXd euclidean_distances(const MeasureNetwork& a, const MeasureNetwork& b) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          distance(a.attributes[i], b.attributes[j]);
    }
  }
  return d;
}

void check_network(const MeasureNetwork& n, const char* name) {
  const auto k = static_cast<Eigen::Index>(n.size());
  if (k == 0) throw InvalidArgument(fmt::format("{} is empty", name));
  if (n.p.size() != k || n.W.rows() != k || n.W.cols() != k || n.attributes.size() != n.size()) {
    throw InvalidArgument(fmt::format("{} has inconsistent sizes", name));
  }
}

}  // namespace

PfgwProblem make_pfgw_problem(const MeasureNetwork& a, const MeasureNetwork& b, double alpha,
                              int q, bool normalize) {
  check_network(a, "first network");
  check_network(b, "second network");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument(fmt::format("alpha {} outside [0, 1]", alpha));
  if (q != 2) throw InvalidArgument(fmt::format("q = {} is not supported; only q = 2", q));

  PfgwProblem problem;
  Eigen::MatrixXd d = euclidean_distances(a, b);
  problem.W1 = a.W;
  problem.W2 = b.W;
  if (normalize) {
    const double dmax = d.maxCoeff();
    if (dmax > 0.0) d /= dmax;
    const double wmax = std::max(problem.W1.maxCoeff(), problem.W2.maxCoeff());
    if (wmax > 0.0) {
      problem.W1 /= wmax;
      problem.W2 /= wmax;
    }
  }
  problem.attribute_cost = d.array().square().matrix();
  problem.p1 = a.p;
  problem.p2 = b.p;
  problem.alpha = alpha;
  return problem;
}

Eigen::MatrixXd structure_tensor_product(const PfgwProblem& problem, const Eigen::MatrixXd& C) {
  // (W1(i,k) - W2(j,l))^2 = W1(i,k)^2 + W2(j,l)^2 - 2 W1(i,k) W2(j,l); W2 is symmetric.
  const Eigen::VectorXd rows = C.rowwise().sum();
  const Eigen::VectorXd cols = C.colwise().sum().transpose();
  const Eigen::VectorXd left = problem.W1.array().square().matrix() * rows;
  const Eigen::VectorXd right = problem.W2.array().square().matrix() * cols;
  Eigen::MatrixXd L = -2.0 * (problem.W1 * C * problem.W2);
  L.colwise() += left;
  L.rowwise() += right.transpose();
  return L;
}

double pfgw_objective(const PfgwProblem& problem, const Eigen::MatrixXd& C) {
  const double linear = (problem.attribute_cost.array() * C.array()).sum();
  double quadratic = 0.0;
  if (problem.alpha > 0.0) {
    quadratic = (structure_tensor_product(problem, C).array() * C.array()).sum();
  }
  return (1.0 - problem.alpha) * linear + problem.alpha * quadratic;
}

PfgwResult solve_pfgw(const MeasureNetwork& a, const MeasureNetwork& b, const PfgwOptions& options) {
  return solve_pfgw(make_pfgw_problem(a, b, options.alpha, options.q, options.normalize), options);
}

PfgwResult solve_pfgw(const PfgwProblem& problem, const PfgwOptions& options) {
  const double alpha = problem.alpha;
  const double m = options.m;
  if (options.q != 2) throw InvalidArgument("only q = 2 is supported");
  if (!(m > 0.0 && m <= 1.0 + 1e-12)) throw InvalidArgument(fmt::format("mass {} outside (0, 1]", m));
  if (options.max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");

  const auto n1 = problem.p1.size();
  const auto n2 = problem.p2.size();
  Eigen::MatrixXd C;
  if (options.initial) {
    C = *options.initial;
    if (C.rows() != n1 || C.cols() != n2 ||
        !check_feasibility(C, problem.p1, problem.p2, m).ok(1e-9)) {
      throw InvalidArgument("initial coupling is not a feasible relaxed coupling");
    }
  } else {
    C = m * problem.p1 * problem.p2.transpose();
  }

  PfgwResult result;
  double objective = pfgw_objective(problem, C);
  result.objective_trace.push_back(objective);

  for (int it = 1; it <= options.max_iterations; ++it) {
    result.iterations = it;
    const Eigen::MatrixXd LC = alpha > 0.0 ? structure_tensor_product(problem, C)
                                           : Eigen::MatrixXd::Zero(n1, n2);
    const Eigen::MatrixXd grad = (1.0 - alpha) * problem.attribute_cost + 2.0 * alpha * LC;
    const Eigen::MatrixXd target = solve_partial_linear_ot(grad, problem.p1, problem.p2, m).matrix;
    const Eigen::MatrixXd dir = target - C;

    const double slope = (grad.array() * dir.array()).sum();
    const double scale = std::max(1.0, std::abs(objective));
    if (slope >= -1e-15 * scale) {
      result.converged = true;  // Frank-Wolfe gap closed
      break;
    }
    const double curvature =
        alpha > 0.0 ? alpha * (structure_tensor_product(problem, dir).array() * dir.array()).sum() : 0.0;
    double tau = 1.0;
    if (curvature > 0.0) tau = std::clamp(-slope / (2.0 * curvature), 0.0, 1.0);

    Eigen::MatrixXd next = C + tau * dir;
    next = next.cwiseMax(0.0);
    const double next_objective = pfgw_objective(problem, next);
    if (!(next_objective <= objective)) {
      result.converged = true;  // no numerical progress left
      break;
    }
    const double decrease = objective - next_objective;
    C = std::move(next);
    objective = next_objective;
    result.objective_trace.push_back(objective);
    if (decrease <= options.relative_tolerance * std::max(std::abs(objective + decrease),
                                                         std::numeric_limits<double>::min())) {
      result.converged = true;
      break;
    }
  }

  result.distance_q = std::max(objective, 0.0);
  result.coupling = {std::move(C), m};
  return result;
}

std::vector<double> mass_grid(const MassSearch& search) {
  if (!(search.step > 0.0) || !(search.m_low > 0.0) || search.m_high > 1.0 + 1e-12 ||
      search.m_high < search.m_low) {
    throw InvalidArgument(fmt::format("empty or invalid mass range [{}, {}] step {}", search.m_low,
                                      search.m_high, search.step));
  }
  std::vector<double> grid;
  const auto count = static_cast<int>(std::floor((search.m_high - search.m_low) / search.step + 1e-9)) + 1;
  for (int k = 0; k < count; ++k) {
    // Round to 12 decimals so 0.9 - 6 * 0.05 lands on 0.6.
    const double m = std::round((search.m_high - k * search.step) * 1e12) / 1e12;
    grid.push_back(std::clamp(m, search.m_low, search.m_high));
  }
  return grid;
}

MassSelection auto_select_mass(const MeasureNetwork& a, const MeasureNetwork& b, double alpha,
                               const MassSearch& search) {
  if (!(search.max_match_km > 0.0)) throw InvalidArgument("max_match_km must be positive");
  const auto grid = mass_grid(search);
  const PfgwProblem problem = make_pfgw_problem(a, b, alpha, 2, search.normalize);
  const Eigen::MatrixXd dist = euclidean_distances(a, b);

  auto offending = [&](const Eigen::MatrixXd& C) {
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      for (Eigen::Index j = 0; j < C.cols(); ++j) {
        if (C(i, j) >= search.mass_epsilon && dist(i, j) > search.max_match_km) ++count;
      }
    }
    return count;
  };

  MassSelection selection;
  for (double m : grid) {
    PfgwOptions opts;
    opts.alpha = alpha;
    opts.m = m;
    opts.normalize = search.normalize;
    PfgwResult res = solve_pfgw(problem, opts);
    if (offending(res.coupling.matrix) == 0) {
      selection.m = m;
      selection.result = std::move(res);
      return selection;
    }
    selection.m = m;
    selection.result = std::move(res);
  }

  auto& C = selection.result.coupling.matrix;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      if (C(i, j) >= search.mass_epsilon && dist(i, j) > search.max_match_km) {
        C(i, j) = 0.0;
        ++selection.zeroed_entries;
      }
    }
  }
  selection.fallback = true;
  return selection;
}

double max_match_distance_km(double speed_m_per_s, double interval_minutes) {
  return speed_m_per_s * interval_minutes * 60.0 / 1000.0;
}

}  // namespace topotrack
