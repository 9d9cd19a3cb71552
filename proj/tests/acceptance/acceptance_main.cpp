// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "topotrack/merge_tree.hpp"
#include "topotrack/metrics.hpp"
#include "topotrack/partial_ot.hpp"
#include "topotrack/pfgw.hpp"
#include "topotrack/pipeline.hpp"
#include "topotrack/tracker.hpp"

using namespace topotrack;
using topotrack::gen::Rng;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------

Outcome nested_tree_partial_matching() {
  Outcome out;
  const auto start = Clock::now();
  const MeasureNetwork t1 = scenarios::nested_tree_network(true);
  const MeasureNetwork t2 = scenarios::nested_tree_network(false);
  PfgwOptions opts;
  opts.alpha = 0.5;
  opts.m = 0.8;
  const PfgwResult res = solve_pfgw(t1, t2, opts);
  const double elapsed = seconds_since(start);

  const auto& C = res.coupling.matrix;
  out.require(C.rows() == 10 && C.cols() == 8, "coupling is not 10x8");
  if (!out.pass) return out;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (i == j) {
        out.require(std::abs(C(i, j) - 0.1) <= 1e-6, fmt::format("C({0},{0}) = {1}", i + 1, C(i, j)));
      } else if (i >= 8) {
        out.require(C(i, j) == 0.0, fmt::format("row {} entry {} = {} is not zero", i + 1, j + 1, C(i, j)));
      } else {
        out.require(C(i, j) <= 1e-6, fmt::format("off-diagonal C({},{}) = {}", i + 1, j + 1, C(i, j)));
      }
    }
  }
  out.require(std::abs(C.sum() - 0.8) <= 1e-9, fmt::format("total mass {}", C.sum()));
  out.require(elapsed < 1.0, fmt::format("took {:.3f} s", elapsed));
  if (out.pass) out.detail = fmt::format("objective {:.3g}, {} iterations, {:.3f} s", res.distance_q, res.iterations, elapsed);
  return out;
}

Outcome split_scores_and_events() {
  Outcome out;
  const auto sys = scenarios::split_systems();
  const Coupling coupling{scenarios::split_coupling(), 0.59};
  const ScoreTable scores = compute_matching_scores(coupling, sys.rows, sys.cols, sys.at_t, sys.at_t1);
  const double sxy = scores.score(1, 1);
  const double sxz = scores.score(1, 2);
  out.require(std::abs(sxy - 0.27) <= 1e-12, fmt::format("S(X,Y) = {}", sxy));
  out.require(std::abs(sxz - 0.32) <= 1e-12, fmt::format("S(X,Z) = {}", sxz));

  const AreaMap at = system_areas(sys.at_t);
  const AreaMap at1 = system_areas(sys.at_t1);
  const auto valid = enumerate_valid_matches(scores, at, at1, 0.1);
  out.require(valid.count({1, 1}) == 1 && valid.count({1, 2}) == 1, "both links are not valid at r = 0.1");
  const MainMatching main = select_main_matching(valid, at, at1);
  out.require(main.forward.size() == 1 && main.forward.at(1) == 2, "main match is not X -> Z");

  const TrajectorySet ts = assemble_trajectories({{1}, {1, 2}}, {PairLinks{valid, main}});
  bool split = false;
  for (const auto& ev : ts.events) {
    if (ev.kind == EventKind::split && ev.time_index == 1 && ev.from == std::vector<SystemId>{1} &&
        ev.to == std::vector<SystemId>{2, 1}) {
      split = true;
    }
  }
  out.require(split, "no split event X -> {Z, Y}");
  if (out.pass) out.detail = fmt::format("S(X,Y) = {}, S(X,Z) = {}", sxy, sxz);
  return out;
}

bool sos_at_or_above(double v, std::size_t i, double level, std::size_t level_pixel) {
  return i == level_pixel || sos_greater(v, i, level, level_pixel);
}

std::size_t tree_components_at(const MergeTree& tree, int width, double level, std::size_t level_pixel) {
  auto pixel_of = [&](const TreeNode& n) {
    return static_cast<std::size_t>(n.location.row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(n.location.col);
  };
  std::size_t count = 0;
  for (const auto& n : tree.nodes()) {
    if (!sos_at_or_above(n.value, pixel_of(n), level, level_pixel)) continue;
    if (n.parent == kNoNode) {
      ++count;
      continue;
    }
    const auto& p = tree.node(n.parent);
    if (!sos_at_or_above(p.value, pixel_of(p), level, level_pixel)) ++count;
  }
  return count;
}

Outcome merge_tree_oracles() {
  Outcome out;
  const auto start = Clock::now();
  Rng rng(20240601);
  std::size_t levels_checked = 0;
  for (int g = 0; g < 200 && out.pass; ++g) {
    const ScalarField f = gen::random_grid(rng, 16, 16, g % 2 == 0 ? 6 : 0);
    const auto built = build_merge_tree(f);
    const auto order = oracle::sweep_order(f);
    // Each distinct value v: the superlevel set {f >= v} ends at the last pixel holding v.
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k + 1 < order.size() && f.values[order[k + 1]] == f.values[order[k]]) continue;
      std::vector<std::uint8_t> mask(f.size(), 0);
      for (std::size_t i = 0; i < f.size(); ++i) mask[i] = f.values[i] >= f.values[order[k]];
      const auto expected = oracle::count_components(16, 16, mask, 8);
      const auto got = tree_components_at(built.tree, 16, f.values[order[k]], order[k]);
      out.require(expected == got, fmt::format("grid {} level {}: tree {} vs flood fill {}", g,
                                               f.values[order[k]], got, expected));
      ++levels_checked;
    }
    std::set<std::size_t> leaves;
    for (NodeId id : built.tree.maxima()) {
      const auto& n = built.tree.node(id);
      leaves.insert(static_cast<std::size_t>(n.location.row) * 16 + static_cast<std::size_t>(n.location.col));
    }
    out.require(leaves == oracle::local_maxima(f), fmt::format("grid {}: leaf set differs from local maxima", g));
  }
  const double elapsed = seconds_since(start);
  out.require(elapsed < 10.0, fmt::format("took {:.2f} s", elapsed));
  if (out.pass) out.detail = fmt::format("{} levels on 200 grids, {:.2f} s", levels_checked, elapsed);
  return out;
}

Outcome coupling_feasibility() {
  Outcome out;
  Rng rng(77);
  int iterations = 0;
  for (int k = 0; k < 100 && out.pass; ++k) {
    const int n1 = rng.integer(1, 30);
    const int n2 = rng.integer(1, 30);
    const auto a = gen::random_network(rng, n1, rng.coin());
    const auto b = gen::random_network(rng, n2, rng.coin());
    PfgwOptions opts;
    opts.alpha = rng.uniform();
    opts.m = rng.uniform(0.05, 1.0);
    const PfgwResult res = solve_pfgw(a, b, opts);
    const auto rep = check_feasibility(res.coupling.matrix, a.p, b.p, opts.m);
    out.require(rep.ok(1e-9), fmt::format("instance {}: row excess {:.3g}, col excess {:.3g}, mass error {:.3g}, "
                                          "min entry {:.3g}", k, rep.row_excess, rep.col_excess,
                                          rep.mass_error, rep.min_entry));
    for (std::size_t t = 1; t < res.objective_trace.size(); ++t) {
      out.require(res.objective_trace[t] <= res.objective_trace[t - 1],
                  fmt::format("instance {}: objective rose at iteration {}", k, t));
    }
    iterations += res.iterations;
  }
  if (out.pass) out.detail = fmt::format("100 instances, {} iterations total", iterations);
  return out;
}

Outcome self_distance() {
  Outcome out;
  Rng rng(5);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto net = gen::random_network(rng, rng.integer(1, 30), rng.coin());
    PfgwOptions opts;
    opts.alpha = rng.uniform();
    opts.m = 1.0;
    opts.initial = Eigen::MatrixXd(net.p.asDiagonal());
    const PfgwResult res = solve_pfgw(net, net, opts);
    worst = std::max(worst, res.distance_q);
    out.require(res.distance_q <= 1e-6, fmt::format("network {}: objective {}", k, res.distance_q));
  }
  if (out.pass) out.detail = fmt::format("largest objective {:.3g}", worst);
  return out;
}

Outcome linear_reduction() {
  Outcome out;
  Rng rng(314);
  double worst = 0.0;
  int vertex_checked = 0;
  for (int k = 0; k < 50; ++k) {
    const int cap = k < 20 ? 3 : 10;
    const auto a = gen::random_network(rng, rng.integer(1, cap), rng.coin());
    const auto b = gen::random_network(rng, rng.integer(1, cap), rng.coin());
    const double m = rng.uniform(0.05, 1.0);
    PfgwOptions opts;
    opts.alpha = 0.0;
    opts.m = m;
    const PfgwResult res = solve_pfgw(a, b, opts);

    Eigen::MatrixXd cost(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        const double dx = a.attributes[i].x - b.attributes[j].x;
        const double dy = a.attributes[i].y - b.attributes[j].y;
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dx * dx + dy * dy;
      }
    }
    double best = oracle::partial_ot_by_tableau(cost, a.p, b.p, m).objective;
    if (a.size() * b.size() <= 9) {
      const double by_vertices = oracle::partial_ot_by_vertices(cost, a.p, b.p, m).objective;
      out.require(std::abs(by_vertices - best) <= 1e-9, fmt::format("instance {}: oracles disagree", k));
      best = by_vertices;
      ++vertex_checked;
    }
    const double gap = std::abs(res.distance_q - best);
    worst = std::max(worst, gap);
    out.require(gap <= 1e-9, fmt::format("instance {}: pfgw {} vs optimum {}", k, res.distance_q, best));
  }
  if (out.pass) {
    out.detail = fmt::format("largest gap {:.3g}; {} instances also by vertex enumeration", worst, vertex_checked);
  }
  return out;
}

RunConfig synthetic_config() {
  RunConfig c;
  c.input_dir = "unused";
  c.output_dir = "unused";
  c.detection_threshold = 2.0;
  c.min_area_px = 10;
  c.alpha = 0.4;
  c.max_match_km = 27.0;
  c.jobs = 4;
  return c;
}

Outcome synthetic_motion() {
  Outcome out;
  const auto start = Clock::now();
  const RunConfig config = synthetic_config();

  const RunResult moving = run_pipeline(generate_synthetic(scenarios::translating_blob()), config);
  std::vector<const Trajectory*> mains;
  for (const auto& t : moving.trajectories.trajectories) {
    if (t.kind == TrajectoryKind::main) mains.push_back(&t);
  }
  out.require(mains.size() == 1, fmt::format("translating blob: {} main trajectories", mains.size()));
  if (mains.size() == 1) {
    const auto& traj = *mains.front();
    out.require(traj.entries.size() == 20, fmt::format("trajectory covers {} frames", traj.entries.size()));
    std::vector<KmPoint> centroids;
    for (const auto& e : traj.entries) {
      centroids.push_back(moving.frames[static_cast<std::size_t>(e.time_index)].systems[e.system - 1].centroid_km);
    }
    const double loss = linearity_loss(centroids);
    out.require(loss < 0.1, fmt::format("linearity loss {} km", loss));
    out.require(trajectory_timespan(traj, 15.0) == 300.0, "timespan is not 20 intervals");
  }

  constexpr int split_frame = 4;
  const RunResult split = run_pipeline(generate_synthetic(scenarios::splitting_blob(64, 12, split_frame)), config);
  std::size_t split_events = 0;
  for (const auto& ev : split.trajectories.events) {
    if (ev.kind == EventKind::split) {
      ++split_events;
      out.require(ev.time_index == split_frame, fmt::format("split event at frame {}", ev.time_index));
      out.require(ev.to.size() == 2, "split event does not name two targets");
    }
  }
  out.require(split_events == 1, fmt::format("{} split events", split_events));
  for (int t = split_frame; t < 12; ++t) {
    int alive = 0;
    for (const auto& traj : split.trajectories.trajectories) {
      if (traj.kind != TrajectoryKind::main) continue;
      for (const auto& e : traj.entries) alive += e.time_index == t;
    }
    out.require(alive == 2, fmt::format("frame {}: {} main trajectories", t, alive));
  }
  const double elapsed = seconds_since(start);
  out.require(elapsed < 30.0, fmt::format("took {:.2f} s", elapsed));
  if (out.pass) out.detail = fmt::format("{:.2f} s", elapsed);
  return out;
}

Trajectory chain(int id, int length) {
  Trajectory t;
  t.id = id;
  for (int k = 0; k < length; ++k) t.entries.push_back({k, static_cast<SystemId>(id + 1)});
  return t;
}

Outcome metric_closed_forms() {
  Outcome out;
  const std::vector<KmPoint> pts{{0, 0}, {1, 1}, {2, 0}};
  const double loss = linearity_loss(pts);
  out.require(std::abs(loss - std::sqrt(2.0 / 9.0)) <= 1e-9, fmt::format("linearity loss {}", loss));
  const std::vector<double> means{1, 2, 3};
  const double sd = population_sd(means);
  out.require(std::abs(sd - std::sqrt(2.0 / 3.0)) <= 1e-12, fmt::format("sd {}", sd));

  // Trajectory k follows system k + 1 in every frame; lengths 1, 1, 2, 3, 4 give a 30-minute median.
  const std::vector<int> lengths{1, 1, 2, 3, 4};
  TrajectorySet ts;
  std::vector<std::vector<CloudSystem>> frames(4);
  for (int k = 0; k < static_cast<int>(lengths.size()); ++k) {
    ts.trajectories.push_back(chain(k, lengths[static_cast<std::size_t>(k)]));
  }
  for (int t = 0; t < 4; ++t) {
    for (int k = 0; k < static_cast<int>(lengths.size()); ++k) {
      CloudSystem s;
      s.system_id = static_cast<SystemId>(k + 1);
      s.mean_value = 1.0 + t;
      s.centroid_km = {static_cast<double>(t), t == 1 ? 1.0 : 0.0};
      frames[static_cast<std::size_t>(t)].push_back(s);
    }
  }
  const StatsReport rep = summarize_run(ts, frames, 15.0);
  out.require(rep.median_timespan_minutes == 30.0, fmt::format("median timespan {}", rep.median_timespan_minutes));
  for (const auto& r : rep.records) {
    const bool eligible = r.entries >= 3 && r.timespan_minutes > 30.0;
    out.require(r.sd_mean_value.has_value() == eligible && r.linearity_loss_km.has_value() == eligible,
                fmt::format("trajectory {} ({} entries): filter not applied as absence", r.trajectory_id, r.entries));
  }
  out.require(rep.sd_mean_value.count == 2 && rep.linearity_loss.count == 2, "aggregate counts differ from 2");
  // The 3-entry trajectory sees means (1, 2, 3) and centroids (0,0), (1,1), (2,0).
  if (rep.records.size() == 5 && rep.records[3].sd_mean_value && rep.records[3].linearity_loss_km) {
    out.require(std::abs(*rep.records[3].sd_mean_value - std::sqrt(2.0 / 3.0)) <= 1e-12, "3-entry sd");
    out.require(std::abs(*rep.records[3].linearity_loss_km - std::sqrt(2.0 / 9.0)) <= 1e-9, "3-entry loss");
  }
  // Equal lengths: nobody is strictly above the median.
  TrajectorySet flat;
  for (int k = 0; k < 3; ++k) flat.trajectories.push_back(chain(k, 3));
  const StatsReport none = summarize_run(flat, frames, 15.0);
  for (const auto& r : none.records) {
    out.require(!r.sd_mean_value && !r.linearity_loss_km, "metric present at the median");
  }
  if (out.pass) out.detail = fmt::format("loss {:.12f}, sd {:.12f}", loss, sd);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  Outcome out;
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / fmt::format("topotrack_accept_{}", ::getpid());
  fs::remove_all(root);
  write_sequence(generate_synthetic(scenarios::splitting_blob()), root / "grids");
  RunConfig config = synthetic_config();
  config.input_dir = root / "grids";
  config.output_dir = root / "out";

  std::vector<std::string> traj, stats;
  for (int run = 0; run < 2; ++run) {
    write_run_outputs(run_pipeline(config), config);
    traj.push_back(slurp(config.output_dir / "trajectories.csv"));
    stats.push_back(slurp(config.output_dir / "stats.json"));
  }
  fs::remove_all(root);
  out.require(!traj[0].empty() && !stats[0].empty(), "outputs are empty");
  out.require(traj[0] == traj[1], "trajectories.csv differs between runs");
  out.require(stats[0] == stats[1], "stats.json differs between runs");
  if (out.pass) out.detail = fmt::format("{} + {} bytes identical", traj[0].size(), stats[0].size());
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"partial matching of nested merge trees (m = 0.8)", nested_tree_partial_matching},
      {"matching scores, valid links and split event", split_scores_and_events},
      {"merge tree vs flood-fill and local-maximum oracles", merge_tree_oracles},
      {"coupling feasibility and monotone objective", coupling_feasibility},
      {"self-distance with identity warm start", self_distance},
      {"alpha = 0 reduces to exact partial linear OT", linear_reduction},
      {"end-to-end synthetic translation and split", synthetic_motion},
      {"metric closed forms and long-trajectory filter", metric_closed_forms},
      {"byte-identical reruns", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome result;
    try {
      result = criteria[k].second();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = fmt::format("exception: {}", e.what());
    }
    failed += result.pass ? 0 : 1;
    std::printf("%s [%zu] %s: %s\n", result.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                result.detail.c_str());
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
