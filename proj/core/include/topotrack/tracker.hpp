#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "topotrack/cloud_objects.hpp"
#include "topotrack/partial_ot.hpp"

namespace topotrack {

using SystemPair = std::pair<SystemId, SystemId>;
using AreaMap = std::map<SystemId, std::int64_t>;

AreaMap system_areas(std::span<const CloudSystem> systems);

/// Matching scores S_t(X, Y) between systems of adjacent frames. Only
/// positive scores are stored.
class ScoreTable {
 public:
  void add(SystemId x, SystemId y, double score);

  double score(SystemId x, SystemId y) const;
  double row_total(SystemId x) const;  // S_t(X, *)
  double col_total(SystemId y) const;  // S_t(*, Y)
  double total() const;

  const std::map<SystemPair, double>& entries() const { return scores_; }

 private:
  std::map<SystemPair, double> scores_;
  std::map<SystemId, double> rows_;
  std::map<SystemId, double> cols_;
};

/// S_t(X, Y) = sum of coupling entries between anchors of X (rows) and Y
/// (columns). `row_nodes` / `col_nodes` give the node id of each coupling
/// row / column.
ScoreTable compute_matching_scores(const Coupling& coupling, std::span<const NodeId> row_nodes,
                                   std::span<const NodeId> col_nodes,
                                   std::span<const CloudSystem> systems_t,
                                   std::span<const CloudSystem> systems_t1);

/// (X, Y) is valid when S(X, Y) > 0 and either X and Y are each other's
/// best match, or S(X, Y) >= r * max(S(X, *), S(*, Y)). Argmax ties prefer
/// the larger partner, then the lower id.
std::set<SystemPair> enumerate_valid_matches(const ScoreTable& scores, const AreaMap& areas_t,
                                             const AreaMap& areas_t1, double r = 0.1);

struct MainMatching {
  std::map<SystemId, SystemId> forward;  // X -> Y, one-to-one
  std::vector<SystemId> terminated;      // X without a match
  std::vector<SystemId> born;            // Y without a match
};

/// Greedy: X by descending area (ties: lower id) takes its largest
/// still-unmatched valid Y (ties: lower id).
MainMatching select_main_matching(const std::set<SystemPair>& valid, const AreaMap& areas_t,
                                  const AreaMap& areas_t1);

enum class TrajectoryKind { main, secondary };
enum class EventKind { birth, termination, merge, split };

const char* to_string(TrajectoryKind kind);
const char* to_string(EventKind kind);

struct TrajectoryEntry {
  int time_index = 0;
  SystemId system = 0;

  bool operator==(const TrajectoryEntry&) const = default;
};

struct Trajectory {
  int id = 0;
  TrajectoryKind kind = TrajectoryKind::main;
  bool split_born = false;
  std::vector<TrajectoryEntry> entries;

  bool operator==(const Trajectory&) const = default;
};

/// `from` systems live at time_index - 1 for merge/split, at time_index for
/// termination; `to` systems live at time_index.
struct TrackEvent {
  int time_index = 0;
  EventKind kind = EventKind::birth;
  std::vector<SystemId> from;
  std::vector<SystemId> to;

  bool operator==(const TrackEvent&) const = default;
};

struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  std::vector<TrackEvent> events;

  bool operator==(const TrajectorySet&) const = default;
};

/// Links between frame t and t + 1.
struct PairLinks {
  std::set<SystemPair> valid;
  MainMatching main;
};

/// `frame_systems[t]` lists the system ids of frame t; `links[t]` joins
/// frames t and t + 1. Main trajectories follow main matches; each valid
/// non-main link becomes a two-entry secondary trajectory and joins one
/// split event (target not main-matched: it starts a split-born main
/// trajectory) or one merge event (otherwise).
TrajectorySet assemble_trajectories(const std::vector<std::vector<SystemId>>& frame_systems,
                                    const std::vector<PairLinks>& links);

}  // namespace topotrack
