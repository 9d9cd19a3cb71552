#include "topotrack/partial_ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "topotrack/error.hpp"

namespace topotrack {

namespace {

struct Cell {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double flow = 0.0;
};

// Transportation simplex on a spanning-tree basis. Tree nodes are rows
// [0, M) followed by columns [M, M + N). `forbidden` (row, col) is never
// priced; callers must order rows/columns so the initial basis avoids it.
class TransportSimplex {
 public:
  TransportSimplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                   const Eigen::VectorXd& demand, Eigen::Index forbidden_row,
                   Eigen::Index forbidden_col)
      : cost_(cost),
        rows_(cost.rows()),
        cols_(cost.cols()),
        forbidden_row_(forbidden_row),
        forbidden_col_(forbidden_col) {
    scale_ = 1.0;
    for (Eigen::Index i = 0; i < rows_; ++i) {
      for (Eigen::Index j = 0; j < cols_; ++j) {
        if (!is_forbidden(i, j)) scale_ = std::max(scale_, std::abs(cost_(i, j)));
      }
    }
    north_west_corner(supply, demand);
  }

  Eigen::MatrixXd solve() {
    const auto node_count = static_cast<std::size_t>(rows_ + cols_);
    u_.assign(static_cast<std::size_t>(rows_), 0.0);
    v_.assign(static_cast<std::size_t>(cols_), 0.0);
    const double eps = 1e-12 * scale_;
    const std::int64_t max_pivots = 50 * static_cast<std::int64_t>(rows_ * cols_) + 10000;
    const std::int64_t stall_limit = 4 * static_cast<std::int64_t>(node_count) + 50;
    std::int64_t degenerate_run = 0;
    bool bland = false;

    for (std::int64_t pivot = 0;; ++pivot) {
      if (pivot > max_pivots) throw Error("transport simplex did not converge");
      compute_potentials();

      Eigen::Index ei = -1, ej = -1;
      double best = -eps;
      for (Eigen::Index i = 0; i < rows_ && !(bland && ei >= 0); ++i) {
        for (Eigen::Index j = 0; j < cols_; ++j) {
          if (is_forbidden(i, j)) continue;
          const double r = cost_(i, j) - u_[static_cast<std::size_t>(i)] - v_[static_cast<std::size_t>(j)];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;

      // Cycle: entering cell (+), then the tree path from column ej back to row ei.
      const auto path = tree_path(ei, rows_ + ej);
      double theta = std::numeric_limits<double>::infinity();
      std::size_t leaving = path.front();
      for (std::size_t k = 0; k < path.size(); k += 2) {
        const auto slot = path[k];
        const double f = cells_[slot].flow;
        const bool better = bland ? (f < theta || (f == theta && cell_key(slot) < cell_key(leaving)))
                                  : f < theta;
        if (better) {
          theta = f;
          leaving = slot;
        }
      }
      theta = std::max(theta, 0.0);
      for (std::size_t k = 0; k < path.size(); ++k) {
        cells_[path[k]].flow += (k % 2 == 0) ? -theta : theta;
      }

      degenerate_run = theta <= 1e-15 ? degenerate_run + 1 : 0;
      if (degenerate_run > stall_limit) bland = true;

      detach(leaving);
      cells_[leaving] = {ei, ej, theta};
      attach(leaving);
    }

    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(rows_, cols_);
    for (const auto& c : cells_) flow(c.row, c.col) += std::max(c.flow, 0.0);
    return flow;
  }

 private:
  bool is_forbidden(Eigen::Index i, Eigen::Index j) const {
    return i == forbidden_row_ && j == forbidden_col_;
  }

  std::int64_t cell_key(std::size_t slot) const {
    return static_cast<std::int64_t>(cells_[slot].row * cols_ + cells_[slot].col);
  }

  void north_west_corner(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand) {
    std::vector<double> a(supply.data(), supply.data() + supply.size());
    std::vector<double> b(demand.data(), demand.data() + demand.size());
    Eigen::Index i = 0, j = 0;
    adjacency_.assign(static_cast<std::size_t>(rows_ + cols_), {});
    while (true) {
      const double q = std::max(0.0, std::min(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]));
      cells_.push_back({i, j, q});
      attach(cells_.size() - 1);
      a[static_cast<std::size_t>(i)] -= q;
      b[static_cast<std::size_t>(j)] -= q;
      if (i == rows_ - 1 && j == cols_ - 1) break;
      if (j == cols_ - 1 || (i < rows_ - 1 && a[static_cast<std::size_t>(i)] < b[static_cast<std::size_t>(j)])) {
        ++i;
      } else {
        ++j;
      }
    }
    for (const auto& c : cells_) {
      if (is_forbidden(c.row, c.col)) {
        throw Error("transport simplex: initial basis uses the forbidden cell");
      }
    }
  }

  void attach(std::size_t slot) {
    adjacency_[static_cast<std::size_t>(cells_[slot].row)].push_back(slot);
    adjacency_[static_cast<std::size_t>(rows_ + cells_[slot].col)].push_back(slot);
  }

  void detach(std::size_t slot) {
    for (auto node : {cells_[slot].row, rows_ + cells_[slot].col}) {
      auto& adj = adjacency_[static_cast<std::size_t>(node)];
      adj.erase(std::find(adj.begin(), adj.end(), slot));
    }
  }

  Eigen::Index other_end(std::size_t slot, Eigen::Index node) const {
    const auto& c = cells_[slot];
    return node < rows_ ? rows_ + c.col : c.row;
  }

  void compute_potentials() {
    const auto n = static_cast<std::size_t>(rows_ + cols_);
    std::vector<std::uint8_t> done(n, 0);
    std::vector<Eigen::Index> stack{0};
    u_[0] = 0.0;
    done[0] = 1;
    while (!stack.empty()) {
      const Eigen::Index node = stack.back();
      stack.pop_back();
      for (auto slot : adjacency_[static_cast<std::size_t>(node)]) {
        const Eigen::Index next = other_end(slot, node);
        if (done[static_cast<std::size_t>(next)]) continue;
        done[static_cast<std::size_t>(next)] = 1;
        const auto& c = cells_[slot];
        const double cij = cost_(c.row, c.col);
        if (next >= rows_) {
          v_[static_cast<std::size_t>(c.col)] = cij - u_[static_cast<std::size_t>(c.row)];
        } else {
          u_[static_cast<std::size_t>(c.row)] = cij - v_[static_cast<std::size_t>(c.col)];
        }
        stack.push_back(next);
      }
    }
  }

  // Basic cells on the tree path from `to` back to `from`, listed starting at `to`.
  std::vector<std::size_t> tree_path(Eigen::Index from, Eigen::Index to) const {
    const auto n = static_cast<std::size_t>(rows_ + cols_);
    std::vector<std::int64_t> via(n, -1);
    std::vector<std::uint8_t> done(n, 0);
    std::vector<Eigen::Index> stack{from};
    done[static_cast<std::size_t>(from)] = 1;
    while (!stack.empty() && !done[static_cast<std::size_t>(to)]) {
      const Eigen::Index node = stack.back();
      stack.pop_back();
      for (auto slot : adjacency_[static_cast<std::size_t>(node)]) {
        const Eigen::Index next = other_end(slot, node);
        if (done[static_cast<std::size_t>(next)]) continue;
        done[static_cast<std::size_t>(next)] = 1;
        via[static_cast<std::size_t>(next)] = static_cast<std::int64_t>(slot);
        stack.push_back(next);
      }
    }
    if (!done[static_cast<std::size_t>(to)]) throw Error("transport simplex: basis is not a spanning tree");
    std::vector<std::size_t> path;
    for (Eigen::Index node = to; node != from;) {
      const auto slot = static_cast<std::size_t>(via[static_cast<std::size_t>(node)]);
      path.push_back(slot);
      node = other_end(slot, node);
    }
    return path;
  }

  const Eigen::MatrixXd& cost_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  Eigen::Index forbidden_row_;
  Eigen::Index forbidden_col_;
  double scale_ = 1.0;
  std::vector<Cell> cells_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<double> u_;
  std::vector<double> v_;
};

void check_finite(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw InvalidArgument("transport cost must be finite");
}

void check_nonnegative(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) >= 0.0) || !std::isfinite(v(i))) {
      throw InvalidArgument(fmt::format("{} must be finite and nonnegative", what));
    }
  }
}

}  // namespace

Eigen::MatrixXd solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                                const Eigen::VectorXd& demand) {
  if (cost.rows() == 0 || cost.cols() == 0) throw InvalidArgument("empty transport problem");
  if (supply.size() != cost.rows() || demand.size() != cost.cols()) {
    throw InvalidArgument("transport marginals do not match the cost matrix");
  }
  check_finite(cost);
  check_nonnegative(supply, "supply");
  check_nonnegative(demand, "demand");
  const double total = supply.sum();
  if (std::abs(total - demand.sum()) > 1e-9 * std::max(1.0, total)) {
    throw InvalidArgument("unbalanced transport problem");
  }
  return TransportSimplex(cost, supply, demand, -1, -1).solve();
}

Coupling solve_partial_linear_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p1,
                                 const Eigen::VectorXd& p2, double m) {
  const Eigen::Index n1 = cost.rows();
  const Eigen::Index n2 = cost.cols();
  if (n1 == 0 || n2 == 0) throw InvalidArgument("empty partial transport problem");
  if (p1.size() != n1 || p2.size() != n2) {
    throw InvalidArgument("partial transport marginals do not match the cost matrix");
  }
  check_finite(cost);
  check_nonnegative(p1, "p1");
  check_nonnegative(p2, "p2");
  const double s1 = p1.sum();
  const double s2 = p2.sum();
  const double slack = 1e-12 * std::max(1.0, std::max(s1, s2));
  if (!(m > 0.0) || m > std::min(s1, s2) + slack) {
    throw InvalidArgument(fmt::format("transported mass {} outside (0, {}]", m, std::min(s1, s2)));
  }

  // Row 0 and the last column are virtual; this order keeps the north-west
  // initial basis off the forbidden virtual/virtual cell.
  Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(n1 + 1, n2 + 1);
  ext.block(1, 0, n1, n2) = cost;
  Eigen::VectorXd supply(n1 + 1);
  Eigen::VectorXd demand(n2 + 1);
  supply(0) = std::max(0.0, s2 - m);
  supply.tail(n1) = p1;
  demand.head(n2) = p2;
  demand(n2) = std::max(0.0, s1 - m);

  const Eigen::MatrixXd flow = TransportSimplex(ext, supply, demand, 0, n2).solve();
  return {flow.block(1, 0, n1, n2), m};
}

FeasibilityReport check_feasibility(const Eigen::MatrixXd& C, const Eigen::VectorXd& p1,
                                    const Eigen::VectorXd& p2, double m) {
  FeasibilityReport r;
  if (C.size() == 0) {
    r.mass_error = std::abs(m);
    return r;
  }
  const Eigen::VectorXd rows = C.rowwise().sum();
  const Eigen::VectorXd cols = C.colwise().sum().transpose();
  r.row_excess = std::max(0.0, (rows - p1).maxCoeff());
  r.col_excess = std::max(0.0, (cols - p2).maxCoeff());
  r.mass_error = std::abs(C.sum() - m);
  r.min_entry = C.minCoeff();
  return r;
}

}  // namespace topotrack
