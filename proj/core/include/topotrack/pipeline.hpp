#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topotrack/cloud_objects.hpp"
#include "topotrack/measure_net.hpp"
#include "topotrack/merge_tree.hpp"
#include "topotrack/metrics.hpp"
#include "topotrack/pfgw.hpp"
#include "topotrack/tracker.hpp"

namespace topotrack {

struct RunConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  double interval_minutes = 15.0;
  double detection_threshold = 2.0;
  int connectivity = 8;
  std::int64_t min_area_px = 0;
  int zone_node_cap = 5000;
  int zone_step = 5;
  double merge_radius_km = 4.0;
  double alpha = 0.4;
  int q = 2;
  std::array<double, 2> m_range{0.6, 0.9};
  double m_step = 0.05;
  std::optional<double> max_match_km;
  std::optional<double> speed_limit_m_per_s;
  double r = 0.1;
  std::uint64_t seed = 0;  // echoed only; every stage is deterministic
  bool normalize = false;
  std::string preset;  // informational, set by apply_preset

  // Execution options; they never change the results.
  int jobs = 1;
  bool dump_couplings = false;
  bool dump_trees = false;

  /// Resolved matching radius in km.
  double match_radius_km() const;
};

/// Known preset names: marine, land-morning, land-midday.
std::vector<std::string> preset_names();
void apply_preset(RunConfig& config, const std::string& name);

/// Overlays one flat JSON object onto `config`. Unknown keys are errors.
/// Setting one of max_match_km / speed_limit_m_per_s clears the other;
/// setting both in the same layer is an error.
void apply_config_layer(RunConfig& config, const nlohmann::json& layer);

/// Converts a command-line `--key value` string to the JSON value that
/// apply_config_layer expects.
nlohmann::json parse_override_value(const std::string& key, const std::string& text);

void validate(const RunConfig& config);

/// Resolved parameters; execution options are left out so that the echo
/// does not depend on --jobs.
nlohmann::json to_json(const RunConfig& config);

struct FrameResult {
  int time_index = 0;
  MergeTree tree;  // simplified
  std::int64_t zone_threshold = 0;
  CloudObjectLabeling labeling;
  std::vector<CloudSystem> systems;
  MeasureNetwork network;  // empty when the frame has no systems
};

struct PairResult {
  int time_index = 0;  // joins frames t and t + 1
  std::optional<MassSelection> selection;  // absent when a frame has no systems
  ScoreTable scores;
  PairLinks links;
};

struct RunResult {
  std::vector<FrameResult> frames;
  std::vector<PairResult> pairs;
  TrajectorySet trajectories;
  StatsReport stats;
};

using LogSink = std::function<void(const std::string&)>;

FrameResult process_frame(const ScalarField& field, const RunConfig& config);
PairResult process_pair(const FrameResult& a, const FrameResult& b, const RunConfig& config);

/// Runs every stage in memory. Throws Error with frame or pair context.
RunResult run_pipeline(const FieldSequence& sequence, const RunConfig& config,
                       const LogSink& log = {});
/// Loads config.input_dir first.
RunResult run_pipeline(const RunConfig& config, const LogSink& log = {});

/// Writes all artifacts into config.output_dir. Files are staged in a
/// scratch directory and moved into place only once all are written.
void write_run_outputs(const RunResult& result, const RunConfig& config);

}  // namespace topotrack
