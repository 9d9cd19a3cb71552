#include "topotrack/measure_net.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "topotrack/error.hpp"

namespace topotrack {

double tree_distance(const MergeTree& tree, NodeId u, NodeId v) {
  if (!tree.contains(u) || !tree.contains(v)) {
    throw InvalidArgument(fmt::format("tree_distance: unknown node {} or {}", u, v));
  }
  if (u == v) return 0.0;
  std::unordered_set<NodeId> ancestors;
  for (NodeId a = u; a != kNoNode; a = tree.node(a).parent) ancestors.insert(a);
  NodeId lca = v;
  while (!ancestors.count(lca)) lca = tree.node(lca).parent;
  const double f_lca = tree.node(lca).value;
  return (tree.node(u).value - f_lca) + (tree.node(v).value - f_lca);
}

Eigen::MatrixXd tree_distance_matrix(const MergeTree& tree, std::span<const NodeId> nodes) {
  const auto k = static_cast<Eigen::Index>(nodes.size());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(k, k);
  if (k == 0) return W;

  std::unordered_map<NodeId, std::vector<Eigen::Index>> listed;
  for (Eigen::Index i = 0; i < k; ++i) {
    const NodeId id = nodes[static_cast<std::size_t>(i)];
    if (!tree.contains(id)) throw InvalidArgument(fmt::format("unknown node {}", id));
    listed[id].push_back(i);
  }

  // Children sit strictly above their parent, so a descending sweep is a post-order.
  std::vector<NodeId> order;
  order.reserve(tree.size());
  for (const auto& n : tree.nodes()) order.push_back(n.id);
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    const auto& na = tree.node(a);
    const auto& nb = tree.node(b);
    if (na.value != nb.value) return na.value > nb.value;
    return na.location.row < nb.location.row ||
           (na.location.row == nb.location.row && na.location.col < nb.location.col);
  });

  std::unordered_map<NodeId, std::vector<Eigen::Index>> below;  // listed indices in subtree
  for (NodeId s : order) {
    const double fs = tree.node(s).value;
    std::vector<Eigen::Index> acc;
    if (auto it = listed.find(s); it != listed.end()) acc = it->second;
    for (NodeId c : tree.children(s)) {
      auto it = below.find(c);
      if (it == below.end()) continue;
      auto& sub = it->second;
      for (auto a : acc) {
        const double fa = tree.node(nodes[static_cast<std::size_t>(a)]).value;
        for (auto b : sub) {
          const double fb = tree.node(nodes[static_cast<std::size_t>(b)]).value;
          const double d = (fa - fs) + (fb - fs);
          W(a, b) = d;
          W(b, a) = d;
        }
      }
      if (acc.size() < sub.size()) std::swap(acc, sub);
      acc.insert(acc.end(), sub.begin(), sub.end());
      below.erase(it);
    }
    if (!acc.empty()) below.emplace(s, std::move(acc));
  }
  // Repeated ids in `nodes` stay at distance 0.
  return W;
}

Eigen::VectorXd uniform_mass(std::size_t n) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  if (n == 0) return p;
  const double each = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    p(static_cast<Eigen::Index>(i)) = each;
    acc += each;
  }
  p(static_cast<Eigen::Index>(n - 1)) = 1.0 - acc;
  return p;
}

MeasureNetwork to_measure_network(const MergeTree& tree, const Spacing& spacing,
                                  const std::optional<std::vector<NodeId>>& filter, MassMode mode) {
  MeasureNetwork net;
  std::unordered_set<NodeId> allowed;
  if (filter) allowed.insert(filter->begin(), filter->end());
  for (const auto& n : tree.nodes()) {
    if (mode == MassMode::maxima && n.kind != NodeKind::maximum) continue;
    if (filter && !allowed.count(n.id)) continue;
    net.node_ids.push_back(n.id);
    net.attributes.push_back({n.location.col * spacing.x_km, n.location.row * spacing.y_km});
  }
  if (net.node_ids.empty()) {
    throw InvalidArgument("measure network needs at least one mass-carrying node");
  }
  net.p = uniform_mass(net.node_ids.size());
  net.W = tree_distance_matrix(tree, net.node_ids);
  return net;
}

}  // namespace topotrack
