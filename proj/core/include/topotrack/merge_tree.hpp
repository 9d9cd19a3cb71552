#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "topotrack/field_io.hpp"

namespace topotrack {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class NodeKind { maximum, saddle, root };

const char* to_string(NodeKind kind);

struct Pixel {
  int col = 0;
  int row = 0;

  bool operator==(const Pixel&) const = default;
};

struct TreeNode {
  NodeId id = kNoNode;
  NodeKind kind = NodeKind::maximum;
  double value = 0.0;
  Pixel location;
  NodeId parent = kNoNode;  // kNoNode for the root

  bool operator==(const TreeNode&) const = default;
};

/// Simulation of simplicity: equal values are ordered by row-major index,
/// lower index counting as infinitesimally larger.
inline bool sos_greater(double va, std::size_t ia, double vb, std::size_t ib) {
  return va > vb || (va == vb && ia < ib);
}

/// Merge tree of -f: leaves are maxima of f, internal nodes saddles, the root
/// the global minimum. Node ids are stable across simplification; the tree
/// only stores the surviving ones.
class MergeTree {
 public:
  MergeTree() = default;

  /// Validates the structure (single root, acyclic, every leaf a maximum,
  /// values strictly decreasing towards the root).
  explicit MergeTree(std::vector<TreeNode> nodes);

  std::span<const TreeNode> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  bool contains(NodeId id) const;
  const TreeNode& node(NodeId id) const;
  std::span<const NodeId> children(NodeId id) const;
  NodeId root() const { return root_; }

  /// Ids of maxima, ascending.
  std::vector<NodeId> maxima() const;
  std::size_t leaf_count() const;
  /// One past the largest node id ever used; sizes id-indexed arrays.
  NodeId id_bound() const { return static_cast<NodeId>(index_of_.size()); }

  bool operator==(const MergeTree& other) const { return nodes_ == other.nodes_; }

 private:
  std::size_t slot(NodeId id) const;

  std::vector<TreeNode> nodes_;  // sorted by id
  std::vector<std::int32_t> index_of_;  // id -> position in nodes_, -1 if absent
  std::vector<std::vector<NodeId>> children_;  // parallel to nodes_, ascending ids
  NodeId root_ = kNoNode;
};

/// Topological zones: every non-missing pixel belongs to exactly one edge,
/// identified by the edge's child node id.
struct ZoneMap {
  std::vector<NodeId> edge_of_pixel;  // kNoNode for missing pixels
  std::vector<std::int64_t> zone_area_px;  // indexed by child node id

  std::int64_t area(NodeId edge) const;
  std::int64_t total_area() const;

  bool operator==(const ZoneMap&) const = default;
};

struct TreeAndZones {
  MergeTree tree;
  ZoneMap zones;
};

/// Union-find sweep over 8-neighbourhoods in decreasing value order.
TreeAndZones build_merge_tree(const ScalarField& field);

/// Removes leaves whose edge zone is below `min_zone_px`, smallest zone first
/// (ties by lower id), splicing out saddles left with one child. The absorbed
/// zone joins the surviving sibling edge. The last leaf is never removed.
TreeAndZones simplify_by_zone_area(const MergeTree& tree, const ZoneMap& zones,
                                   std::int64_t min_zone_px);

struct AutoSimplifyResult {
  MergeTree tree;
  ZoneMap zones;
  std::int64_t threshold = 0;
};

/// Raises the zone threshold from 0 by `step` until the tree has fewer than
/// `node_cap` nodes.
AutoSimplifyResult auto_simplify(const MergeTree& tree, const ZoneMap& zones,
                                 std::size_t node_cap = 5000, std::int64_t step = 5);

/// Debug dump, one line per node: `node_id kind value col row parent_id`.
void write_tree_dump(const MergeTree& tree, std::ostream& out);

}  // namespace topotrack
