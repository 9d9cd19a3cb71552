#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "topotrack/field_io.hpp"
#include "topotrack/merge_tree.hpp"

namespace topotrack {

using Label = std::uint32_t;
using SystemId = std::uint32_t;

struct CloudObject {
  Label label = 0;
  std::int64_t area_px = 0;
  KmPoint centroid_km;
  double mean_value = 0.0;
  std::vector<std::size_t> pixels;  // row-major indices, ascending
};

/// Connected components of a superlevel set. Labels are 1..K in order of
/// each object's first pixel in row-major order.
struct CloudObjectLabeling {
  LabelGrid grid;
  Spacing spacing_km;
  std::vector<CloudObject> objects;  // objects[k].label == k + 1
};

CloudObjectLabeling detect_objects(const ScalarField& field, double threshold, int connectivity = 8);

/// Drops objects with area_px < min_area_px and recompacts labels.
CloudObjectLabeling filter_small_objects(const CloudObjectLabeling& labeling, std::int64_t min_area_px);

/// anchors[label - 1] = ascending ids of the maxima located inside that object.
using AnchorMap = std::vector<std::vector<NodeId>>;

AnchorMap attach_anchor_points(const CloudObjectLabeling& labeling, const MergeTree& tree);

struct CloudSystem {
  SystemId system_id = 0;
  std::vector<Label> member_labels;  // ascending
  std::vector<NodeId> anchors;  // ascending
  std::int64_t area_px = 0;
  KmPoint centroid_km;  // area-weighted
  double mean_value = 0.0;  // area-weighted
};

/// Objects whose nearest pixel centres lie within `merge_radius_km` are linked;
/// systems are the connected components of that relation. System ids are 1..S
/// ordered by each system's smallest member label.
std::vector<CloudSystem> build_cloud_systems(const CloudObjectLabeling& labeling,
                                             const AnchorMap& anchors,
                                             double merge_radius_km = 4.0);

/// Per-pixel system id (0 = background).
LabelGrid system_label_grid(const CloudObjectLabeling& labeling,
                            const std::vector<CloudSystem>& systems);

/// CSV rows `time_index,label,area_px,centroid_x_km,centroid_y_km,mean_value,system_id`.
void write_object_table_header(std::ostream& out);
void write_object_rows(std::ostream& out, int time_index, const CloudObjectLabeling& labeling,
                       const std::vector<CloudSystem>& systems);

}  // namespace topotrack
