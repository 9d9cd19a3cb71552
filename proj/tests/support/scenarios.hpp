#pragma once

// Worked examples shared by the unit tests and the acceptance binary.

#include <vector>

#include <Eigen/Dense>

#include "topotrack/cloud_objects.hpp"
#include "topotrack/field_io.hpp"
#include "topotrack/measure_net.hpp"
#include "topotrack/merge_tree.hpp"

namespace topotrack::scenarios {

// Two small merge trees: the second (8 nodes) is the first (10 nodes)
// without the saddle a9 and its extra maximum a10. Node k (0-based) is a_{k+1}.
inline MergeTree two_branch_tree(bool with_extra_branch) {
  std::vector<TreeNode> nodes = {
      {0, NodeKind::root, 0.0, {0, 0}, kNoNode},
      {1, NodeKind::saddle, 2.0, {1, 0}, 0},
      {2, NodeKind::maximum, 6.0, {2, 0}, 1},
      {3, NodeKind::saddle, 3.0, {3, 0}, 1},
      {4, NodeKind::maximum, 8.0, {4, 0}, 3},
      {5, NodeKind::saddle, 4.0, {5, 0}, 3},
      {6, NodeKind::maximum, 7.0, {6, 0}, 5},
      {7, NodeKind::maximum, 9.0, {7, 0}, 5},
  };
  if (with_extra_branch) {
    nodes.push_back({8, NodeKind::saddle, 5.0, {40, 30}, 5});
    nodes.push_back({9, NodeKind::maximum, 6.5, {45, 30}, 8});
    nodes[7].parent = 8;
  }
  return MergeTree(std::move(nodes));
}

inline MeasureNetwork nested_tree_network(bool with_extra_branch) {
  return to_measure_network(two_branch_tree(with_extra_branch), Spacing{1.0, 1.0}, std::nullopt,
                            MassMode::all_nodes);
}

// Anchor coupling between X = {x1, x2, x3} and Y = {y1, y2}, Z = {z1, z2}.
// x1 -> y1 carries 0.11; the Y columns sum to 0.27 and the Z columns to 0.32.
inline Eigen::MatrixXd split_coupling() {
  Eigen::MatrixXd C(3, 4);
  C << 0.11, 0.02, 0.03, 0.01,
       0.05, 0.06, 0.10, 0.04,
       0.01, 0.02, 0.06, 0.08;
  return C;
}

struct SplitSystems {
  std::vector<NodeId> rows{10, 11, 12};
  std::vector<NodeId> cols{20, 21, 22, 23};
  std::vector<CloudSystem> at_t;
  std::vector<CloudSystem> at_t1;
};

/// X is system 1 at t; Y (system 1) and Z (system 2) at t + 1 with area(Z) > area(Y).
inline SplitSystems split_systems() {
  SplitSystems s;
  CloudSystem x;
  x.system_id = 1;
  x.anchors = {10, 11, 12};
  x.area_px = 300;
  s.at_t = {x};
  CloudSystem y;
  y.system_id = 1;
  y.anchors = {20, 21};
  y.area_px = 120;
  CloudSystem z;
  z.system_id = 2;
  z.anchors = {22, 23};
  z.area_px = 180;
  s.at_t1 = {y, z};
  return s;
}

/// One Gaussian blob moving `step_px` pixels per frame along x.
inline SyntheticSpec translating_blob(int size = 64, int frames = 20, double step_px = 2.0) {
  SyntheticSpec spec;
  spec.width_px = size;
  spec.height_px = size;
  spec.spacing_km = {1.0, 1.0};
  spec.frames = frames;
  spec.interval_minutes = 15.0;
  BlobTrack blob;
  blob.amplitude = 10.0;
  blob.width_km = 3.0;
  for (int t = 0; t < frames; ++t) blob.centers.push_back({10.5 + step_px * t, size / 2.0 + 0.5});
  spec.blobs = {blob};
  return spec;
}

/// One blob that divides at `split_frame` into two blobs drifting apart
/// vertically; from the split on, their threshold-2 footprints are more
/// than 4 km apart.
inline SyntheticSpec splitting_blob(int size = 64, int frames = 12, int split_frame = 4) {
  SyntheticSpec spec;
  spec.width_px = size;
  spec.height_px = size;
  spec.spacing_km = {1.0, 1.0};
  spec.frames = frames;
  spec.interval_minutes = 15.0;
  BlobTrack upper, lower;
  upper.amplitude = 10.0;
  upper.width_km = 2.5;
  lower.amplitude = 9.0;
  lower.width_km = 2.5;
  const double cx = size / 2.0 + 0.5;
  const double cy = size / 2.0 + 0.5;
  for (int t = 0; t < frames; ++t) {
    const double offset = t < split_frame ? 0.0 : 8.0 + 2.0 * (t - split_frame);
    upper.centers.push_back({cx, cy - offset});
    lower.centers.push_back({cx, cy + offset});
  }
  spec.blobs = {upper, lower};
  return spec;
}

}  // namespace topotrack::scenarios
