#include "topotrack/merge_tree.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>
#include <utility>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "topotrack/error.hpp"

namespace topotrack {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::maximum: return "maximum";
    case NodeKind::saddle: return "saddle";
    case NodeKind::root: return "root";
  }
  return "?";
}

namespace {

// Row-major order on locations, matching sos_greater's index rule.
bool location_before(const Pixel& a, const Pixel& b) {
  return a.row < b.row || (a.row == b.row && a.col < b.col);
}

bool node_above(const TreeNode& a, const TreeNode& b) {
  return a.value > b.value || (a.value == b.value && location_before(a.location, b.location));
}

}  // namespace

MergeTree::MergeTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InvalidArgument("merge tree needs at least one node");
  std::sort(nodes_.begin(), nodes_.end(),
            [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
  if (nodes_.front().id < 0) throw InvalidArgument("negative node id");
  index_of_.assign(static_cast<std::size_t>(nodes_.back().id) + 1, -1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& slot_ref = index_of_[static_cast<std::size_t>(nodes_[i].id)];
    if (slot_ref != -1) throw InvalidArgument(fmt::format("duplicate node id {}", nodes_[i].id));
    slot_ref = static_cast<std::int32_t>(i);
  }

  children_.assign(nodes_.size(), {});
  for (const auto& n : nodes_) {
    if (n.parent == kNoNode) {
      if (root_ != kNoNode) throw InvalidArgument("merge tree has more than one root");
      root_ = n.id;
      continue;
    }
    if (!contains(n.parent)) {
      throw InvalidArgument(fmt::format("node {} has unknown parent {}", n.id, n.parent));
    }
    const auto& p = nodes_[slot(n.parent)];
    if (!node_above(n, p)) {
      throw InvalidArgument(fmt::format("edge {}->{} does not decrease in value", n.id, n.parent));
    }
    children_[slot(n.parent)].push_back(n.id);
  }
  if (root_ == kNoNode) throw InvalidArgument("merge tree has no root");
  // Strict decrease along edges already rules out cycles, so every node reaches the root.
  for (const auto& n : nodes_) {
    const bool leaf = children_[slot(n.id)].empty();
    if (leaf && n.id != root_ && n.kind != NodeKind::maximum) {
      throw InvalidArgument(fmt::format("leaf {} is not a maximum", n.id));
    }
    if (n.id == root_ && n.kind != NodeKind::root && nodes_.size() > 1) {
      throw InvalidArgument(fmt::format("root {} must have kind root", n.id));
    }
  }
}

bool MergeTree::contains(NodeId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < index_of_.size() &&
         index_of_[static_cast<std::size_t>(id)] >= 0;
}

std::size_t MergeTree::slot(NodeId id) const {
  if (!contains(id)) throw InvalidArgument(fmt::format("unknown node id {}", id));
  return static_cast<std::size_t>(index_of_[static_cast<std::size_t>(id)]);
}

const TreeNode& MergeTree::node(NodeId id) const { return nodes_[slot(id)]; }

std::span<const NodeId> MergeTree::children(NodeId id) const { return children_[slot(id)]; }

std::vector<NodeId> MergeTree::maxima() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::maximum) out.push_back(n.id);
  }
  return out;
}

std::size_t MergeTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(children_.begin(), children_.end(), [](const auto& c) { return c.empty(); }));
}

std::int64_t ZoneMap::area(NodeId edge) const {
  if (edge < 0 || static_cast<std::size_t>(edge) >= zone_area_px.size()) return 0;
  return zone_area_px[static_cast<std::size_t>(edge)];
}

std::int64_t ZoneMap::total_area() const {
  return std::accumulate(zone_area_px.begin(), zone_area_px.end(), std::int64_t{0});
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace

TreeAndZones build_merge_tree(const ScalarField& field) {
  validate(field);
  const int w = field.width_px;
  const int h = field.height_px;
  const std::size_t n = field.size();

  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!field.is_missing(i)) order.push_back(i);
  }
  if (order.empty()) throw InvalidArgument("cannot build a merge tree of an empty field");
  if (order.size() < 2) throw InvalidArgument("merge tree needs at least two valid pixels");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sos_greater(field.values[a], a, field.values[b], b);
  });

  std::vector<TreeNode> nodes;
  ZoneMap zones;
  zones.edge_of_pixel.assign(n, kNoNode);

  UnionFind uf(n);
  std::vector<NodeId> head(n, kNoNode);  // uf representative -> node whose edge is growing
  std::vector<std::uint8_t> seen(n, 0);

  auto make_node = [&](NodeKind kind, std::size_t pixel) {
    TreeNode node;
    node.id = static_cast<NodeId>(nodes.size());
    node.kind = kind;
    node.value = field.values[pixel];
    node.location = {static_cast<int>(pixel % static_cast<std::size_t>(w)),
                     static_cast<int>(pixel / static_cast<std::size_t>(w))};
    nodes.push_back(node);
    return node.id;
  };

  std::vector<std::size_t> adjacent;
  adjacent.reserve(8);
  const std::size_t last = order.size() - 1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t p = order[k];
    const int col = static_cast<int>(p % static_cast<std::size_t>(w));
    const int row = static_cast<int>(p / static_cast<std::size_t>(w));

    adjacent.clear();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int c = col + dc;
        const int r = row + dr;
        if (c < 0 || r < 0 || c >= w || r >= h) continue;
        const std::size_t q = field.index(c, r);
        if (!seen[q]) continue;
        const std::size_t rep = uf.find(q);
        if (std::find(adjacent.begin(), adjacent.end(), rep) == adjacent.end()) adjacent.push_back(rep);
      }
    }
    // Deterministic order of merged components: by their head node id.
    std::sort(adjacent.begin(), adjacent.end(),
              [&](std::size_t a, std::size_t b) { return head[a] < head[b]; });
    seen[p] = 1;

    if (k == last) {
      const NodeId root = make_node(NodeKind::root, p);
      // Every surviving component, adjacent or cut off by missing pixels, closes here.
      std::vector<NodeId> heads;
      for (std::size_t j = 0; j < last; ++j) {
        const std::size_t q = order[j];
        if (uf.find(q) == q) heads.push_back(head[q]);
      }
      std::sort(heads.begin(), heads.end());
      for (NodeId hd : heads) nodes[static_cast<std::size_t>(hd)].parent = root;
      zones.edge_of_pixel[p] = adjacent.empty() ? heads.front() : head[adjacent.front()];
      break;
    }

    if (adjacent.empty()) {
      const NodeId id = make_node(NodeKind::maximum, p);
      head[p] = id;
      zones.edge_of_pixel[p] = id;
    } else if (adjacent.size() == 1) {
      const NodeId hd = head[adjacent.front()];
      const std::size_t rep = uf.unite(adjacent.front(), p);
      head[rep] = hd;
      zones.edge_of_pixel[p] = hd;
    } else {
      const NodeId saddle = make_node(NodeKind::saddle, p);
      std::size_t rep = p;
      for (std::size_t a : adjacent) {
        nodes[static_cast<std::size_t>(head[a])].parent = saddle;
        rep = uf.unite(rep, a);
      }
      head[rep] = saddle;
      zones.edge_of_pixel[p] = saddle;
    }
  }

  zones.zone_area_px.assign(nodes.size(), 0);
  for (NodeId e : zones.edge_of_pixel) {
    if (e != kNoNode) ++zones.zone_area_px[static_cast<std::size_t>(e)];
  }
  return {MergeTree(std::move(nodes)), std::move(zones)};
}

namespace {

// Mutable working copy for leaf pruning; thresholds may be raised
// incrementally because pruning order does not depend on the threshold.
class ZonePruner {
 public:
  ZonePruner(const MergeTree& tree, const ZoneMap& zones)
      : source_(tree), zones_(zones) {
    const auto bound = static_cast<std::size_t>(tree.id_bound());
    parent_.assign(bound, kNoNode);
    alive_.assign(bound, 0);
    children_.assign(bound, {});
    area_.assign(bound, 0);
    redirect_.assign(bound, kNoNode);
    for (const auto& n : tree.nodes()) {
      const auto i = static_cast<std::size_t>(n.id);
      parent_[i] = n.parent;
      alive_[i] = 1;
      area_[i] = zones.area(n.id);
      const auto ch = tree.children(n.id);
      children_[i].assign(ch.begin(), ch.end());
      ++alive_count_;
      if (ch.empty() && n.id != tree.root()) leaves_.insert({area_[i], n.id});
    }
  }

  std::size_t node_count() const { return alive_count_; }
  std::size_t leaf_count() const { return leaves_.size(); }
  /// Smallest current leaf zone, or -1 when no leaf can be removed.
  std::int64_t smallest_removable() const {
    return leaves_.size() > 1 ? leaves_.begin()->first : -1;
  }

  void prune_below(std::int64_t threshold) {
    while (leaves_.size() > 1 && leaves_.begin()->first < threshold) {
      remove_leaf(leaves_.begin()->second);
    }
  }

  TreeAndZones result() {
    std::vector<TreeNode> nodes;
    nodes.reserve(alive_count_);
    for (const auto& n : source_.nodes()) {
      const auto i = static_cast<std::size_t>(n.id);
      if (!alive_[i]) continue;
      TreeNode copy = n;
      copy.parent = parent_[i];
      nodes.push_back(copy);
    }
    ZoneMap zones;
    zones.zone_area_px.assign(area_.size(), 0);
    for (std::size_t i = 0; i < area_.size(); ++i) {
      if (alive_[i]) zones.zone_area_px[i] = area_[i];
    }
    zones.edge_of_pixel = zones_.edge_of_pixel;
    for (auto& e : zones.edge_of_pixel) {
      if (e != kNoNode) e = resolve(e);
    }
    return {MergeTree(std::move(nodes)), std::move(zones)};
  }

 private:
  NodeId resolve(NodeId e) {
    NodeId r = e;
    while (redirect_[static_cast<std::size_t>(r)] != kNoNode) r = redirect_[static_cast<std::size_t>(r)];
    while (redirect_[static_cast<std::size_t>(e)] != kNoNode) {
      const NodeId next = redirect_[static_cast<std::size_t>(e)];
      redirect_[static_cast<std::size_t>(e)] = r;
      e = next;
    }
    return r;
  }

  bool is_leaf(NodeId id) const {
    return id != source_.root() && children_[static_cast<std::size_t>(id)].empty();
  }

  void add_area(NodeId id, std::int64_t delta) {
    const auto i = static_cast<std::size_t>(id);
    if (is_leaf(id)) leaves_.erase({area_[i], id});
    area_[i] += delta;
    if (is_leaf(id)) leaves_.insert({area_[i], id});
  }

  void remove_leaf(NodeId leaf) {
    const auto li = static_cast<std::size_t>(leaf);
    const NodeId s = parent_[li];
    const auto si = static_cast<std::size_t>(s);
    leaves_.erase({area_[li], leaf});
    auto& siblings = children_[si];
    siblings.erase(std::find(siblings.begin(), siblings.end(), leaf));
    alive_[li] = 0;
    --alive_count_;

    // Surviving sibling edge with the largest zone (ties: lower id) absorbs the leaf's pixels.
    NodeId heir = siblings.front();
    for (NodeId c : siblings) {
      const auto ci = static_cast<std::size_t>(c);
      const auto hi = static_cast<std::size_t>(heir);
      if (area_[ci] > area_[hi] || (area_[ci] == area_[hi] && c < heir)) heir = c;
    }
    redirect_[li] = heir;
    std::int64_t absorbed = area_[li];
    area_[li] = 0;

    if (siblings.size() == 1 && s != source_.root()) {
      // Saddle left with a single child: splice it out.
      const NodeId grand = parent_[si];
      auto& gch = children_[static_cast<std::size_t>(grand)];
      *std::find(gch.begin(), gch.end(), s) = heir;
      std::sort(gch.begin(), gch.end());
      parent_[static_cast<std::size_t>(heir)] = grand;
      redirect_[si] = heir;
      absorbed += area_[si];
      area_[si] = 0;
      alive_[si] = 0;
      children_[si].clear();
      --alive_count_;
    }
    add_area(heir, absorbed);
  }

  const MergeTree& source_;
  const ZoneMap& zones_;
  std::vector<NodeId> parent_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::int64_t> area_;
  std::vector<NodeId> redirect_;
  std::set<std::pair<std::int64_t, NodeId>> leaves_;
  std::size_t alive_count_ = 0;
};

}  // namespace

TreeAndZones simplify_by_zone_area(const MergeTree& tree, const ZoneMap& zones,
                                   std::int64_t min_zone_px) {
  if (min_zone_px < 0) throw InvalidArgument("min_zone_px must be >= 0");
  ZonePruner pruner(tree, zones);
  pruner.prune_below(min_zone_px);
  return pruner.result();
}

AutoSimplifyResult auto_simplify(const MergeTree& tree, const ZoneMap& zones,
                                 std::size_t node_cap, std::int64_t step) {
  if (node_cap < 2) throw InvalidArgument("node_cap must be >= 2");
  if (step <= 0) throw InvalidArgument("zone step must be positive");
  ZonePruner pruner(tree, zones);
  std::int64_t threshold = 0;
  while (pruner.node_count() >= node_cap) {
    const std::int64_t smallest = pruner.smallest_removable();
    if (smallest < 0) {
      throw Error(fmt::format(
          "cannot reduce merge tree below {} nodes: {} nodes remain with a single leaf",
          node_cap, pruner.node_count()));
    }
    // Thresholds in between would prune nothing; jump to the first effective multiple.
    threshold = std::max(threshold + step, (smallest / step + 1) * step);
    pruner.prune_below(threshold);
  }
  auto out = pruner.result();
  return {std::move(out.tree), std::move(out.zones), threshold};
}

void write_tree_dump(const MergeTree& tree, std::ostream& out) {
  for (const auto& n : tree.nodes()) {
    fmt::print(out, "{} {} {} {} {} {}\n", n.id, to_string(n.kind), n.value, n.location.col,
               n.location.row, n.parent);
  }
}

}  // namespace topotrack
