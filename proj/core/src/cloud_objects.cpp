#include "topotrack/cloud_objects.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "topotrack/error.hpp"

namespace topotrack {

namespace {

void finalize_stats(const ScalarField& field, CloudObject& obj) {
  std::sort(obj.pixels.begin(), obj.pixels.end());
  obj.area_px = static_cast<std::int64_t>(obj.pixels.size());
  double sx = 0.0, sy = 0.0, sv = 0.0;
  for (auto i : obj.pixels) {
    const KmPoint p = field.location_km(i);
    sx += p.x;
    sy += p.y;
    sv += field.value_or_zero(i);
  }
  const double n = static_cast<double>(obj.pixels.size());
  obj.centroid_km = {sx / n, sy / n};
  obj.mean_value = sv / n;
}

class LabelUnion {
 public:
  explicit LabelUnion(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

CloudObjectLabeling detect_objects(const ScalarField& field, double threshold, int connectivity) {
  validate(field);
  if (!(threshold > 0.0)) throw InvalidArgument("detection threshold must be positive");
  if (connectivity != 4 && connectivity != 8) throw InvalidArgument("connectivity must be 4 or 8");

  const int w = field.width_px;
  const int h = field.height_px;
  CloudObjectLabeling out;
  out.spacing_km = field.spacing_km;
  out.grid.width_px = w;
  out.grid.height_px = h;
  out.grid.labels.assign(field.size(), 0);

  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < field.size(); ++start) {
    if (out.grid.labels[start] != 0 || field.value_or_zero(start) < threshold) continue;
    CloudObject obj;
    obj.label = static_cast<Label>(out.objects.size() + 1);
    out.grid.labels[start] = obj.label;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      obj.pixels.push_back(p);
      const int col = static_cast<int>(p % static_cast<std::size_t>(w));
      const int row = static_cast<int>(p / static_cast<std::size_t>(w));
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr == 0 && dc == 0) || (connectivity == 4 && dr != 0 && dc != 0)) continue;
          const int c = col + dc;
          const int r = row + dr;
          if (c < 0 || r < 0 || c >= w || r >= h) continue;
          const std::size_t q = field.index(c, r);
          if (out.grid.labels[q] != 0 || field.value_or_zero(q) < threshold) continue;
          out.grid.labels[q] = obj.label;
          stack.push_back(q);
        }
      }
    }
    finalize_stats(field, obj);
    out.objects.push_back(std::move(obj));
  }
  return out;
}

CloudObjectLabeling filter_small_objects(const CloudObjectLabeling& labeling, std::int64_t min_area_px) {
  if (min_area_px < 0) throw InvalidArgument("min_area_px must be >= 0");
  CloudObjectLabeling out;
  out.spacing_km = labeling.spacing_km;
  out.grid.width_px = labeling.grid.width_px;
  out.grid.height_px = labeling.grid.height_px;
  out.grid.labels.assign(labeling.grid.labels.size(), 0);
  for (const auto& obj : labeling.objects) {
    if (obj.area_px < min_area_px) continue;
    CloudObject kept = obj;
    kept.label = static_cast<Label>(out.objects.size() + 1);
    for (auto i : kept.pixels) out.grid.labels[i] = kept.label;
    out.objects.push_back(std::move(kept));
  }
  return out;
}

AnchorMap attach_anchor_points(const CloudObjectLabeling& labeling, const MergeTree& tree) {
  const auto& grid = labeling.grid;
  AnchorMap anchors(labeling.objects.size());
  for (const auto& n : tree.nodes()) {
    if (n.kind != NodeKind::maximum) continue;
    const auto [col, row] = n.location;
    if (col < 0 || row < 0 || col >= grid.width_px || row >= grid.height_px) {
      throw InvalidArgument(fmt::format("maximum {} lies outside the labelled grid", n.id));
    }
    const auto idx = static_cast<std::size_t>(row) * static_cast<std::size_t>(grid.width_px) +
                     static_cast<std::size_t>(col);
    const Label label = grid.labels[idx];
    if (label != 0) anchors[label - 1].push_back(n.id);
  }
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (anchors[k].empty()) {
      throw Error(fmt::format(
          "cloud object {} (area {} px) contains no merge-tree maximum; "
          "lower the zone simplification threshold",
          k + 1, labeling.objects[k].area_px));
    }
    std::sort(anchors[k].begin(), anchors[k].end());
  }
  return anchors;
}

std::vector<CloudSystem> build_cloud_systems(const CloudObjectLabeling& labeling,
                                             const AnchorMap& anchors, double merge_radius_km) {
  if (!(merge_radius_km >= 0.0)) throw InvalidArgument("merge_radius_km must be >= 0");
  if (anchors.size() != labeling.objects.size()) {
    throw InvalidArgument("anchor map does not match the labelling");
  }
  const auto& grid = labeling.grid;
  const int w = grid.width_px;
  const int h = grid.height_px;
  const double sx = labeling.spacing_km.x_km;
  const double sy = labeling.spacing_km.y_km;
  const std::size_t k = labeling.objects.size();

  // Window of pixel offsets whose centre distance is within the radius.
  struct Offset {
    int dc, dr;
  };
  std::vector<Offset> window;
  const int rx = static_cast<int>(std::floor(merge_radius_km / sx + 1e-9));
  const int ry = static_cast<int>(std::floor(merge_radius_km / sy + 1e-9));
  const double r2 = merge_radius_km * merge_radius_km * (1.0 + 1e-12);
  for (int dr = -ry; dr <= ry; ++dr) {
    for (int dc = -rx; dc <= rx; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const double d2 = (dc * sx) * (dc * sx) + (dr * sy) * (dr * sy);
      if (d2 <= r2) window.push_back({dc, dr});
    }
  }

  LabelUnion links(k);
  if (!window.empty()) {
    for (const auto& obj : labeling.objects) {
      for (auto p : obj.pixels) {
        const int col = static_cast<int>(p % static_cast<std::size_t>(w));
        const int row = static_cast<int>(p / static_cast<std::size_t>(w));
        // A nearest pair always has an endpoint on the object boundary.
        bool boundary = false;
        for (int dr = -1; dr <= 1 && !boundary; ++dr) {
          for (int dc = -1; dc <= 1 && !boundary; ++dc) {
            const int c = col + dc;
            const int r = row + dr;
            if (c < 0 || r < 0 || c >= w || r >= h) continue;
            if (grid.labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)] != obj.label) {
              boundary = true;
            }
          }
        }
        if (!boundary) continue;
        for (const auto& off : window) {
          const int c = col + off.dc;
          const int r = row + off.dr;
          if (c < 0 || r < 0 || c >= w || r >= h) continue;
          const Label other = grid.labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)];
          if (other != 0 && other != obj.label) links.unite(obj.label - 1, other - 1);
        }
      }
    }
  }

  std::vector<CloudSystem> systems;
  std::vector<std::int64_t> system_of_root(k, -1);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t root = links.find(i);
    if (system_of_root[root] < 0) {
      system_of_root[root] = static_cast<std::int64_t>(systems.size());
      CloudSystem s;
      s.system_id = static_cast<SystemId>(systems.size() + 1);
      systems.push_back(s);
    }
    auto& sys = systems[static_cast<std::size_t>(system_of_root[root])];
    const auto& obj = labeling.objects[i];
    sys.member_labels.push_back(obj.label);
    sys.anchors.insert(sys.anchors.end(), anchors[i].begin(), anchors[i].end());
    sys.area_px += obj.area_px;
  }
  for (auto& sys : systems) {
    std::sort(sys.anchors.begin(), sys.anchors.end());
    double cx = 0.0, cy = 0.0, mv = 0.0;
    for (Label l : sys.member_labels) {
      const auto& obj = labeling.objects[l - 1];
      const double a = static_cast<double>(obj.area_px);
      cx += a * obj.centroid_km.x;
      cy += a * obj.centroid_km.y;
      mv += a * obj.mean_value;
    }
    const double total = static_cast<double>(sys.area_px);
    sys.centroid_km = {cx / total, cy / total};
    sys.mean_value = mv / total;
  }
  return systems;
}

LabelGrid system_label_grid(const CloudObjectLabeling& labeling, const std::vector<CloudSystem>& systems) {
  std::vector<SystemId> system_of_label(labeling.objects.size() + 1, 0);
  for (const auto& s : systems) {
    for (Label l : s.member_labels) system_of_label.at(l) = s.system_id;
  }
  LabelGrid out = labeling.grid;
  for (auto& l : out.labels) l = system_of_label.at(l);
  return out;
}

void write_object_table_header(std::ostream& out) {
  out << "time_index,label,area_px,centroid_x_km,centroid_y_km,mean_value,system_id\n";
}

void write_object_rows(std::ostream& out, int time_index, const CloudObjectLabeling& labeling,
                       const std::vector<CloudSystem>& systems) {
  std::vector<SystemId> system_of_label(labeling.objects.size() + 1, 0);
  for (const auto& s : systems) {
    for (Label l : s.member_labels) system_of_label.at(l) = s.system_id;
  }
  for (const auto& obj : labeling.objects) {
    fmt::print(out, "{},{},{},{:.6f},{:.6f},{:.6f},{}\n", time_index, obj.label, obj.area_px,
               obj.centroid_km.x, obj.centroid_km.y, obj.mean_value, system_of_label[obj.label]);
  }
}

}  // namespace topotrack
