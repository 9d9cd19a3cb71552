#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "topotrack/field_io.hpp"
#include "topotrack/merge_tree.hpp"

namespace topotrack {

/// Which tree nodes carry probability mass.
enum class MassMode {
  maxima,     // uniform over maxima; saddles and root only shape W
  all_nodes,  // uniform over every node (small worked examples)
};

/// Attributed measure network (V, p, W) built from a merge tree.
struct MeasureNetwork {
  std::vector<NodeId> node_ids;
  Eigen::VectorXd p;  // sums to exactly 1
  Eigen::MatrixXd W;  // tree distances, symmetric, zero diagonal
  std::vector<KmPoint> attributes;

  std::size_t size() const { return node_ids.size(); }
  bool empty() const { return node_ids.empty(); }
};

/// Sum of |f(a) - f(b)| along the tree path: f(u) + f(v) - 2 f(lca(u, v)).
double tree_distance(const MergeTree& tree, NodeId u, NodeId v);

/// Pairwise tree distances for the listed nodes in O(|tree| + k^2).
Eigen::MatrixXd tree_distance_matrix(const MergeTree& tree, std::span<const NodeId> nodes);

/// Uniform probability vector of length n whose entries sum to exactly 1.
Eigen::VectorXd uniform_mass(std::size_t n);

/// `filter`, when given, restricts the mass-carrying nodes to that set
/// (maxima mode: anchors of detected objects).
MeasureNetwork to_measure_network(const MergeTree& tree, const Spacing& spacing,
                                  const std::optional<std::vector<NodeId>>& filter = std::nullopt,
                                  MassMode mode = MassMode::maxima);

}  // namespace topotrack
