#include "topotrack/tracker.hpp"

#include <algorithm>
#include <unordered_map>

#include <fmt/format.h>

#include "topotrack/error.hpp"

namespace topotrack {

AreaMap system_areas(std::span<const CloudSystem> systems) {
  AreaMap out;
  for (const auto& s : systems) out[s.system_id] = s.area_px;
  return out;
}

void ScoreTable::add(SystemId x, SystemId y, double score) {
  if (!(score > 0.0)) return;
  scores_[{x, y}] += score;
  rows_[x] += score;
  cols_[y] += score;
}

double ScoreTable::score(SystemId x, SystemId y) const {
  auto it = scores_.find({x, y});
  return it == scores_.end() ? 0.0 : it->second;
}

double ScoreTable::row_total(SystemId x) const {
  auto it = rows_.find(x);
  return it == rows_.end() ? 0.0 : it->second;
}

double ScoreTable::col_total(SystemId y) const {
  auto it = cols_.find(y);
  return it == cols_.end() ? 0.0 : it->second;
}

double ScoreTable::total() const {
  double t = 0.0;
  for (const auto& [_, s] : scores_) t += s;
  return t;
}

ScoreTable compute_matching_scores(const Coupling& coupling, std::span<const NodeId> row_nodes,
                                   std::span<const NodeId> col_nodes,
                                   std::span<const CloudSystem> systems_t,
                                   std::span<const CloudSystem> systems_t1) {
  const auto& C = coupling.matrix;
  if (static_cast<std::size_t>(C.rows()) != row_nodes.size() ||
      static_cast<std::size_t>(C.cols()) != col_nodes.size()) {
    throw InvalidArgument("coupling shape does not match the anchor orderings");
  }
  std::unordered_map<NodeId, Eigen::Index> row_of, col_of;
  for (std::size_t i = 0; i < row_nodes.size(); ++i) row_of[row_nodes[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < col_nodes.size(); ++j) col_of[col_nodes[j]] = static_cast<Eigen::Index>(j);

  auto resolve = [](const auto& index, NodeId id, SystemId sys, const char* side) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw InvalidArgument(fmt::format("anchor {} of {} system {} has no coupling index", id, side, sys));
    }
    return it->second;
  };

  // Each system's anchor indices, resolved once.
  std::vector<std::vector<Eigen::Index>> cols_by_system;
  cols_by_system.reserve(systems_t1.size());
  for (const auto& y : systems_t1) {
    auto& idx = cols_by_system.emplace_back();
    for (NodeId a : y.anchors) idx.push_back(resolve(col_of, a, y.system_id, "next-frame"));
  }

  ScoreTable table;
  for (const auto& x : systems_t) {
    std::vector<Eigen::Index> rows;
    for (NodeId a : x.anchors) rows.push_back(resolve(row_of, a, x.system_id, "current-frame"));
    for (std::size_t k = 0; k < systems_t1.size(); ++k) {
      double s = 0.0;
      for (auto i : rows) {
        for (auto j : cols_by_system[k]) s += C(i, j);
      }
      table.add(x.system_id, systems_t1[k].system_id, s);
    }
  }
  return table;
}

namespace {

std::int64_t area_of(const AreaMap& areas, SystemId id) {
  auto it = areas.find(id);
  if (it == areas.end()) throw InvalidArgument(fmt::format("no area recorded for system {}", id));
  return it->second;
}

// Better partner: higher score, then larger area, then lower id.
bool better_partner(double s_a, std::int64_t area_a, SystemId a, double s_b, std::int64_t area_b,
                    SystemId b) {
  if (s_a != s_b) return s_a > s_b;
  if (area_a != area_b) return area_a > area_b;
  return a < b;
}

}  // namespace

std::set<SystemPair> enumerate_valid_matches(const ScoreTable& scores, const AreaMap& areas_t,
                                             const AreaMap& areas_t1, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw InvalidArgument(fmt::format("r = {} outside (0, 1]", r));

  std::map<SystemId, SystemId> best_y, best_x;
  for (const auto& [pair, s] : scores.entries()) {
    const auto [x, y] = pair;
    if (auto it = best_y.find(x); it == best_y.end() ||
        better_partner(s, area_of(areas_t1, y), y, scores.score(x, it->second),
                       area_of(areas_t1, it->second), it->second)) {
      best_y[x] = y;
    }
    if (auto it = best_x.find(y); it == best_x.end() ||
        better_partner(s, area_of(areas_t, x), x, scores.score(it->second, y),
                       area_of(areas_t, it->second), it->second)) {
      best_x[y] = x;
    }
  }

  std::set<SystemPair> valid;
  for (const auto& [pair, s] : scores.entries()) {
    const auto [x, y] = pair;
    if (!(s > 0.0)) continue;
    const bool mutual = best_y.at(x) == y && best_x.at(y) == x;
    const bool strong = s >= std::max(scores.row_total(x), scores.col_total(y)) * r;
    if (mutual || strong) valid.insert(pair);
  }
  return valid;
}

MainMatching select_main_matching(const std::set<SystemPair>& valid, const AreaMap& areas_t,
                                  const AreaMap& areas_t1) {
  std::vector<SystemId> xs;
  for (const auto& [id, _] : areas_t) xs.push_back(id);
  std::stable_sort(xs.begin(), xs.end(), [&](SystemId a, SystemId b) {
    const auto aa = areas_t.at(a), ab = areas_t.at(b);
    return aa != ab ? aa > ab : a < b;
  });
  for (const auto& [x, y] : valid) {
    area_of(areas_t, x);
    area_of(areas_t1, y);
  }

  MainMatching out;
  std::set<SystemId> taken;
  for (SystemId x : xs) {
    SystemId choice = 0;
    bool found = false;
    for (auto it = valid.lower_bound({x, 0}); it != valid.end() && it->first == x; ++it) {
      const SystemId y = it->second;
      if (taken.count(y)) continue;
      if (!found || areas_t1.at(y) > areas_t1.at(choice) ||
          (areas_t1.at(y) == areas_t1.at(choice) && y < choice)) {
        choice = y;
        found = true;
      }
    }
    if (found) {
      out.forward[x] = choice;
      taken.insert(choice);
    }
  }
  for (const auto& [x, _] : areas_t) {
    if (!out.forward.count(x)) out.terminated.push_back(x);
  }
  for (const auto& [y, _] : areas_t1) {
    if (!taken.count(y)) out.born.push_back(y);
  }
  return out;
}

const char* to_string(TrajectoryKind kind) {
  return kind == TrajectoryKind::main ? "main" : "secondary";
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::birth: return "birth";
    case EventKind::termination: return "termination";
    case EventKind::merge: return "merge";
    case EventKind::split: return "split";
  }
  return "?";
}

TrajectorySet assemble_trajectories(const std::vector<std::vector<SystemId>>& frame_systems,
                                    const std::vector<PairLinks>& links) {
  const std::size_t frames = frame_systems.size();
  if (frames == 0) return {};
  if (links.size() + 1 != frames) {
    throw Error(fmt::format("assemble_trajectories: {} frames need {} links, got {}", frames,
                            frames - 1, links.size()));
  }

  TrajectorySet out;
  std::map<SystemId, std::size_t> open;  // system at current frame -> main trajectory index

  auto start_main = [&](int t, SystemId id, bool split_born) {
    Trajectory tr;
    tr.id = static_cast<int>(out.trajectories.size());
    tr.kind = TrajectoryKind::main;
    tr.split_born = split_born;
    tr.entries.push_back({t, id});
    out.trajectories.push_back(std::move(tr));
    return out.trajectories.size() - 1;
  };

  for (SystemId id : frame_systems[0]) {
    open[id] = start_main(0, id, false);
    out.events.push_back({0, EventKind::birth, {}, {id}});
  }

  for (std::size_t t = 0; t + 1 < frames; ++t) {
    const int now = static_cast<int>(t);
    const int next = now + 1;
    const auto& pair = links[t];
    const std::set<SystemId> here(frame_systems[t].begin(), frame_systems[t].end());
    const std::set<SystemId> there(frame_systems[t + 1].begin(), frame_systems[t + 1].end());

    std::map<SystemId, SystemId> backward;
    for (const auto& [x, y] : pair.main.forward) {
      if (!here.count(x) || !there.count(y)) {
        throw Error(fmt::format("main match {}->{} at t={} references unknown systems", x, y, now));
      }
      if (!backward.emplace(y, x).second) {
        throw Error(fmt::format("main matching at t={} is not one-to-one", now));
      }
    }

    // Secondary links grouped into split (by source) and merge (by target) events.
    std::map<SystemId, std::vector<SystemId>> split_targets;
    std::map<SystemId, std::vector<SystemId>> merge_sources;
    std::set<SystemId> split_born;
    std::set<SystemId> merged_away;
    for (const auto& [x, y] : pair.valid) {
      if (!here.count(x) || !there.count(y)) {
        throw Error(fmt::format("valid link {}->{} at t={} references unknown systems", x, y, now));
      }
      if (auto it = pair.main.forward.find(x); it != pair.main.forward.end() && it->second == y) continue;
      Trajectory sec;
      sec.id = -1;
      sec.kind = TrajectoryKind::secondary;
      sec.entries = {{now, x}, {next, y}};
      out.trajectories.push_back(std::move(sec));
      if (!backward.count(y)) {
        split_targets[x].push_back(y);
        split_born.insert(y);
      } else {
        merge_sources[y].push_back(x);
        if (!pair.main.forward.count(x)) merged_away.insert(x);
      }
    }

    for (const auto& [x, ys] : split_targets) {
      TrackEvent ev{next, EventKind::split, {x}, {}};
      if (auto it = pair.main.forward.find(x); it != pair.main.forward.end()) ev.to.push_back(it->second);
      ev.to.insert(ev.to.end(), ys.begin(), ys.end());
      out.events.push_back(std::move(ev));
    }
    for (const auto& [y, xs] : merge_sources) {
      TrackEvent ev{next, EventKind::merge, {backward.at(y)}, {y}};
      ev.from.insert(ev.from.end(), xs.begin(), xs.end());
      out.events.push_back(std::move(ev));
    }

    std::map<SystemId, std::size_t> reopened;
    for (SystemId x : frame_systems[t]) {
      auto it = pair.main.forward.find(x);
      const auto traj = open.at(x);
      if (it != pair.main.forward.end()) {
        out.trajectories[traj].entries.push_back({next, it->second});
        reopened[it->second] = traj;
      } else if (!merged_away.count(x)) {
        out.events.push_back({now, EventKind::termination, {x}, {}});
      }
    }
    for (SystemId y : frame_systems[t + 1]) {
      if (backward.count(y)) continue;
      const bool from_split = split_born.count(y) > 0;
      reopened[y] = start_main(next, y, from_split);
      if (!from_split) out.events.push_back({next, EventKind::birth, {}, {y}});
    }
    open = std::move(reopened);
  }

  // Secondary trajectories were appended with placeholder ids.
  for (std::size_t i = 0; i < out.trajectories.size(); ++i) out.trajectories[i].id = static_cast<int>(i);
  return out;
}

}  // namespace topotrack
