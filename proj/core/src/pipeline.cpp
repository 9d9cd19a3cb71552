#include "topotrack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "topotrack/error.hpp"

namespace topotrack {

double RunConfig::match_radius_km() const {
  if (max_match_km) return *max_match_km;
  if (speed_limit_m_per_s) return max_match_distance_km(*speed_limit_m_per_s, interval_minutes);
  throw InvalidArgument("one of max_match_km or speed_limit_m_per_s is required");
}

std::vector<std::string> preset_names() { return {"marine", "land-morning", "land-midday"}; }

void apply_preset(RunConfig& config, const std::string& name) {
  if (name == "marine") {
    config.detection_threshold = 2.0;
    config.min_area_px = 10;
    config.alpha = 0.4;
    config.interval_minutes = 15.0;
    config.speed_limit_m_per_s = 30.0;
  } else if (name == "land-morning" || name == "land-midday") {
    config.detection_threshold = name == "land-morning" ? 9.0 : 10.0;
    config.min_area_px = 0;
    config.alpha = 0.2;
    config.interval_minutes = 15.0;
    config.speed_limit_m_per_s = 40.0;
  } else {
    throw InvalidArgument(fmt::format("unknown preset '{}' (known: {})", name,
                                      fmt::join(preset_names(), ", ")));
  }
  config.max_match_km.reset();
  config.preset = name;
}

namespace {

template <typename T>
T get_as(const nlohmann::json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(fmt::format("config key '{}' has the wrong type: {}", key, value.dump()));
  }
}

int get_int(const nlohmann::json& value, const std::string& key) {
  const double d = get_as<double>(value, key);
  if (std::floor(d) != d) throw InvalidArgument(fmt::format("config key '{}' must be an integer", key));
  return static_cast<int>(d);
}

}  // namespace

void apply_config_layer(RunConfig& c, const nlohmann::json& layer) {
  if (!layer.is_object()) throw InvalidArgument("config must be a flat JSON object");
  if (layer.contains("max_match_km") && layer.contains("speed_limit_m_per_s")) {
    throw InvalidArgument("give only one of max_match_km and speed_limit_m_per_s");
  }
  if (layer.contains("preset")) apply_preset(c, get_as<std::string>(layer["preset"], "preset"));

  for (const auto& [key, v] : layer.items()) {
    if (key == "preset") continue;
    if (key == "input_dir") c.input_dir = get_as<std::string>(v, key);
    else if (key == "output_dir") c.output_dir = get_as<std::string>(v, key);
    else if (key == "interval_minutes") c.interval_minutes = get_as<double>(v, key);
    else if (key == "detection_threshold") c.detection_threshold = get_as<double>(v, key);
    else if (key == "connectivity") c.connectivity = get_int(v, key);
    else if (key == "min_area_px") c.min_area_px = get_int(v, key);
    else if (key == "zone_node_cap") c.zone_node_cap = get_int(v, key);
    else if (key == "zone_step") c.zone_step = get_int(v, key);
    else if (key == "merge_radius_km") c.merge_radius_km = get_as<double>(v, key);
    else if (key == "alpha") c.alpha = get_as<double>(v, key);
    else if (key == "q") c.q = get_int(v, key);
    else if (key == "m_range") {
      const auto range = get_as<std::vector<double>>(v, key);
      if (range.size() != 2) throw InvalidArgument("m_range must have two entries");
      c.m_range = {range[0], range[1]};
    } else if (key == "m_step") c.m_step = get_as<double>(v, key);
    else if (key == "max_match_km") {
      c.max_match_km = get_as<double>(v, key);
      c.speed_limit_m_per_s.reset();
    } else if (key == "speed_limit_m_per_s") {
      c.speed_limit_m_per_s = get_as<double>(v, key);
      c.max_match_km.reset();
    } else if (key == "r") c.r = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "normalize") c.normalize = get_as<bool>(v, key);
    else if (key == "jobs") c.jobs = get_int(v, key);
    else if (key == "dump_couplings") c.dump_couplings = get_as<bool>(v, key);
    else if (key == "dump_trees") c.dump_trees = get_as<bool>(v, key);
    else throw InvalidArgument(fmt::format("unknown config key '{}'", key));
  }
}

nlohmann::json parse_override_value(const std::string& key, const std::string& text) {
  if (key == "input_dir" || key == "output_dir" || key == "preset") return text;
  if (key == "m_range" && text.find(',') != std::string::npos && text.front() != '[') {
    return nlohmann::json::parse("[" + text + "]", nullptr, false);
  }
  auto parsed = nlohmann::json::parse(text, nullptr, false);
  if (parsed.is_discarded()) return text;
  return parsed;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw InvalidArgument(msg); };
  if (c.input_dir.empty()) fail("input_dir is required");
  if (c.output_dir.empty()) fail("output_dir is required");
  if (!(c.interval_minutes > 0.0)) fail("interval_minutes must be positive");
  if (!(c.detection_threshold > 0.0)) fail("detection_threshold must be positive");
  if (c.connectivity != 4 && c.connectivity != 8) fail("connectivity must be 4 or 8");
  if (c.min_area_px < 0) fail("min_area_px must be >= 0");
  if (c.zone_node_cap < 2) fail("zone_node_cap must be >= 2");
  if (c.zone_step <= 0) fail("zone_step must be positive");
  if (!(c.merge_radius_km >= 0.0)) fail("merge_radius_km must be >= 0");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (c.q != 2) fail("only q = 2 is supported");
  if (!(c.m_range[0] > 0.0 && c.m_range[0] <= c.m_range[1] && c.m_range[1] <= 1.0)) {
    fail("m_range must satisfy 0 < low <= high <= 1");
  }
  if (!(c.m_step > 0.0)) fail("m_step must be positive");
  if (c.max_match_km.has_value() == c.speed_limit_m_per_s.has_value()) {
    fail("exactly one of max_match_km or speed_limit_m_per_s is required");
  }
  if (!(c.match_radius_km() > 0.0)) fail("the matching radius must be positive");
  if (!(c.r > 0.0 && c.r <= 1.0)) fail("r must lie in (0, 1]");
  if (c.jobs < 1) fail("jobs must be >= 1");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json doc;
  doc["input_dir"] = c.input_dir.string();
  doc["output_dir"] = c.output_dir.string();
  if (!c.preset.empty()) doc["preset"] = c.preset;
  doc["interval_minutes"] = c.interval_minutes;
  doc["detection_threshold"] = c.detection_threshold;
  doc["connectivity"] = c.connectivity;
  doc["min_area_px"] = c.min_area_px;
  doc["zone_node_cap"] = c.zone_node_cap;
  doc["zone_step"] = c.zone_step;
  doc["merge_radius_km"] = c.merge_radius_km;
  doc["alpha"] = c.alpha;
  doc["q"] = c.q;
  doc["m_range"] = {c.m_range[0], c.m_range[1]};
  doc["m_step"] = c.m_step;
  if (c.max_match_km) doc["max_match_km"] = *c.max_match_km;
  if (c.speed_limit_m_per_s) doc["speed_limit_m_per_s"] = *c.speed_limit_m_per_s;
  doc["resolved_max_match_km"] = c.match_radius_km();
  doc["r"] = c.r;
  doc["seed"] = c.seed;
  doc["normalize"] = c.normalize;
  return doc;
}

FrameResult process_frame(const ScalarField& field, const RunConfig& c) {
  FrameResult out;
  out.time_index = field.time_index;
  auto built = build_merge_tree(field);
  auto simplified = auto_simplify(built.tree, built.zones, static_cast<std::size_t>(c.zone_node_cap),
                                  c.zone_step);
  out.tree = std::move(simplified.tree);
  out.zone_threshold = simplified.threshold;
  out.labeling = filter_small_objects(detect_objects(field, c.detection_threshold, c.connectivity),
                                      c.min_area_px);
  const AnchorMap anchors = attach_anchor_points(out.labeling, out.tree);
  out.systems = build_cloud_systems(out.labeling, anchors, c.merge_radius_km);
  if (!out.systems.empty()) {
    std::vector<NodeId> ids;
    for (const auto& s : out.systems) ids.insert(ids.end(), s.anchors.begin(), s.anchors.end());
    std::sort(ids.begin(), ids.end());
    out.network = to_measure_network(out.tree, field.spacing_km, ids, MassMode::maxima);
  }
  return out;
}

PairResult process_pair(const FrameResult& a, const FrameResult& b, const RunConfig& c) {
  PairResult out;
  out.time_index = a.time_index;
  if (!a.network.empty() && !b.network.empty()) {
    MassSearch search;
    search.m_low = c.m_range[0];
    search.m_high = c.m_range[1];
    search.step = c.m_step;
    search.max_match_km = c.match_radius_km();
    search.normalize = c.normalize;
    out.selection = auto_select_mass(a.network, b.network, c.alpha, search);
    out.scores = compute_matching_scores(out.selection->result.coupling, a.network.node_ids,
                                         b.network.node_ids, a.systems, b.systems);
  }
  const AreaMap areas_a = system_areas(a.systems);
  const AreaMap areas_b = system_areas(b.systems);
  out.links.valid = enumerate_valid_matches(out.scores, areas_a, areas_b, c.r);
  out.links.main = select_main_matching(out.links.valid, areas_a, areas_b);
  return out;
}

namespace {

// Runs task(i) for i in [0, count) on up to `jobs` threads. The exception of
// the lowest failing index is rethrown so failures are reported deterministically.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

RunResult run_pipeline(const FieldSequence& sequence, const RunConfig& config, const LogSink& log) {
  validate(sequence);
  const std::size_t frames = sequence.fields.size();
  RunConfig c = config;
  c.interval_minutes = sequence.interval_minutes;

  RunResult result;
  result.frames.resize(frames);
  parallel_for(frames, c.jobs, [&](std::size_t t) {
    try {
      result.frames[t] = process_frame(sequence.fields[t], c);
    } catch (...) {
      throw Error(fmt::format("frame {}: {}", t, describe(std::current_exception())));
    }
  });

  const std::size_t pairs = frames > 0 ? frames - 1 : 0;
  result.pairs.resize(pairs);
  parallel_for(pairs, c.jobs, [&](std::size_t t) {
    try {
      result.pairs[t] = process_pair(result.frames[t], result.frames[t + 1], c);
    } catch (...) {
      throw Error(fmt::format("frames {}->{}: {}", t, t + 1, describe(std::current_exception())));
    }
  });

  if (log) {
    for (const auto& p : result.pairs) {
      if (p.selection && p.selection->fallback) {
        log(fmt::format("warning: frames {}->{}: no mass in [{}, {}] passes the {} km screen; "
                        "using m = {} with {} entries zeroed",
                        p.time_index, p.time_index + 1, c.m_range[0], c.m_range[1],
                        c.match_radius_km(), p.selection->m, p.selection->zeroed_entries));
      }
    }
  }

  std::vector<std::vector<SystemId>> frame_systems(frames);
  std::vector<std::vector<CloudSystem>> systems_by_frame(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (const auto& s : result.frames[t].systems) frame_systems[t].push_back(s.system_id);
    systems_by_frame[t] = result.frames[t].systems;
  }
  std::vector<PairLinks> links;
  for (const auto& p : result.pairs) links.push_back(p.links);
  result.trajectories = assemble_trajectories(frame_systems, links);
  result.stats = summarize_run(result.trajectories, systems_by_frame, c.interval_minutes);
  return result;
}

RunResult run_pipeline(const RunConfig& config, const LogSink& log) {
  validate(config);
  const FieldSequence sequence = load_sequence(config.input_dir, config.interval_minutes, config.jobs);
  return run_pipeline(sequence, config, log);
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(fmt::format("{}: write failed", path.string()));
}

std::string join_ids(const std::vector<SystemId>& ids) {
  return fmt::format("{}", fmt::join(ids, ";"));
}

void write_trajectories(const RunResult& r, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "trajectory_id,kind,time_index,system_id,centroid_x_km,centroid_y_km,area_px,mean_value\n";
  for (const auto& traj : r.trajectories.trajectories) {
    for (const auto& e : traj.entries) {
      const auto& s = r.frames[static_cast<std::size_t>(e.time_index)].systems[e.system - 1];
      fmt::print(out, "{},{},{},{},{},{},{},{}\n", traj.id, to_string(traj.kind), e.time_index, e.system,
                 s.centroid_km.x, s.centroid_km.y, s.area_px, s.mean_value);
    }
  }
  finish(out, path);
}

void write_events(const RunResult& r, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "time_index,kind,from_ids,to_ids\n";
  for (const auto& ev : r.trajectories.events) {
    fmt::print(out, "{},{},{},{}\n", ev.time_index, to_string(ev.kind), join_ids(ev.from), join_ids(ev.to));
  }
  finish(out, path);
}

void write_pairs(const RunResult& r, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "time_index,m,fallback,zeroed_entries,objective,iterations,valid_links,main_links\n";
  for (const auto& p : r.pairs) {
    if (p.selection) {
      const auto& s = *p.selection;
      fmt::print(out, "{},{},{},{},{},{},{},{}\n", p.time_index, s.m, s.fallback ? 1 : 0, s.zeroed_entries,
                 s.result.distance_q, s.result.iterations, p.links.valid.size(), p.links.main.forward.size());
    } else {
      fmt::print(out, "{},,,,,,0,0\n", p.time_index);
    }
  }
  finish(out, path);
}

void write_couplings(const RunResult& r, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "t,node_id_t,node_id_t1,mass\n";
  for (const auto& p : r.pairs) {
    if (!p.selection) continue;
    const auto& C = p.selection->result.coupling.matrix;
    const auto& rows = r.frames[static_cast<std::size_t>(p.time_index)].network.node_ids;
    const auto& cols = r.frames[static_cast<std::size_t>(p.time_index) + 1].network.node_ids;
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      for (Eigen::Index j = 0; j < C.cols(); ++j) {
        if (C(i, j) > 0.0) {
          fmt::print(out, "{},{},{},{}\n", p.time_index, rows[static_cast<std::size_t>(i)],
                     cols[static_cast<std::size_t>(j)], C(i, j));
        }
      }
    }
  }
  finish(out, path);
}

}  // namespace

void write_run_outputs(const RunResult& r, const RunConfig& config) {
  namespace fs = std::filesystem;
  const fs::path dest = config.output_dir;
  const fs::path stage = dest / ".staging";
  std::error_code ec;
  fs::remove_all(stage, ec);
  fs::create_directories(stage / "labels");

  try {
    write_trajectories(r, stage / "trajectories.csv");
    write_events(r, stage / "events.csv");
    write_pairs(r, stage / "pairs.csv");

    nlohmann::json stats = to_json(r.stats);
    stats["config"] = to_json(config);
    {
      auto out = open_output(stage / "stats.json");
      out << stats.dump(2) << '\n';
      finish(out, stage / "stats.json");
    }
    {
      auto out = open_output(stage / "config.json");
      out << to_json(config).dump(2) << '\n';
      finish(out, stage / "config.json");
    }
    {
      auto out = open_output(stage / "per_trajectory.csv");
      write_per_trajectory_csv(r.stats, out);
      finish(out, stage / "per_trajectory.csv");
    }
    {
      auto out = open_output(stage / "timespan_histogram.csv");
      write_histogram_csv(r.stats, out);
      finish(out, stage / "timespan_histogram.csv");
    }
    {
      auto out = open_output(stage / "objects.csv");
      write_object_table_header(out);
      for (const auto& f : r.frames) write_object_rows(out, f.time_index, f.labeling, f.systems);
      finish(out, stage / "objects.csv");
    }
    for (const auto& f : r.frames) {
      write_label_map(system_label_grid(f.labeling, f.systems),
                      stage / "labels" / fmt::format("frame_{:04d}.pgm", f.time_index));
    }
    if (config.dump_couplings) write_couplings(r, stage / "couplings.csv");
    if (config.dump_trees) {
      fs::create_directories(stage / "trees");
      for (const auto& f : r.frames) {
        const auto path = stage / "trees" / fmt::format("frame_{:04d}.txt", f.time_index);
        auto out = open_output(path);
        write_tree_dump(f.tree, out);
        finish(out, path);
      }
    }
  } catch (...) {
    fs::remove_all(stage, ec);
    throw;
  }

  // Move staged entries into place, replacing earlier outputs of the same name.
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(stage)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& src : entries) {
    const fs::path target = dest / src.filename();
    fs::remove_all(target);
    fs::rename(src, target);
  }
  fs::remove_all(stage);
}

}  // namespace topotrack
