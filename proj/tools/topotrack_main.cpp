#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "topotrack/error.hpp"
#include "topotrack/field_io.hpp"
#include "topotrack/pipeline.hpp"

namespace fs = std::filesystem;
using namespace topotrack;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open config", path.string()));
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw LoadError(fmt::format("{}: not valid JSON", path.string()));
  return doc;
}

// Turns leftover `--key value` / `--key=value` arguments into a config layer.
nlohmann::json overrides_from(const std::vector<std::string>& args) {
  nlohmann::json layer = nlohmann::json::object();
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    if (arg.rfind("--", 0) != 0) throw InvalidArgument(fmt::format("unexpected argument '{}'", arg));
    std::string key = arg.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= args.size()) throw InvalidArgument(fmt::format("option --{} needs a value", key));
      value = args[++i];
    }
    for (char& ch : key) {
      if (ch == '-') ch = '_';
    }
    layer[key] = parse_override_value(key, value);
  }
  return layer;
}

struct RunFlags {
  std::string config_path;
  std::string preset;
  int jobs = 1;
  bool dump_couplings = false;
  bool dump_trees = false;
};

RunConfig resolve_config(const RunFlags& flags, const std::vector<std::string>& extras) {
  RunConfig config;
  nlohmann::json file_layer = nlohmann::json::object();
  if (!flags.config_path.empty()) {
    const fs::path cfg_path = flags.config_path;
    file_layer = read_json_file(cfg_path);
    if (!file_layer.is_object()) throw InvalidArgument("config must be a flat JSON object");
    // Relative paths in a config file are taken relative to that file.
    for (const char* key : {"input_dir", "output_dir"}) {
      if (file_layer.contains(key) && file_layer[key].is_string()) {
        const fs::path p = file_layer[key].get<std::string>();
        if (p.is_relative()) file_layer[key] = (cfg_path.parent_path() / p).lexically_normal().string();
      }
    }
  }
  std::string preset = flags.preset;
  if (file_layer.contains("preset")) {
    if (preset.empty()) preset = file_layer["preset"].get<std::string>();
    file_layer.erase("preset");
  }
  if (!preset.empty()) apply_preset(config, preset);
  apply_config_layer(config, file_layer);
  apply_config_layer(config, overrides_from(extras));
  config.jobs = flags.jobs;
  config.dump_couplings = config.dump_couplings || flags.dump_couplings;
  config.dump_trees = config.dump_trees || flags.dump_trees;
  validate(config);
  return config;
}

int run_command(const RunFlags& flags, const std::vector<std::string>& extras) {
  const RunConfig config = resolve_config(flags, extras);
  const RunResult result = run_pipeline(config, [](const std::string& msg) {
    std::cerr << msg << '\n';
  });
  write_run_outputs(result, config);
  std::size_t mains = result.stats.records.size();
  fmt::print("{} frames, {} main trajectories, {} secondary links -> {}\n", result.frames.size(), mains,
             result.stats.secondary_links, config.output_dir.string());
  return 0;
}

int synth_command(const std::string& spec_path, const std::string& out_dir) {
  const SyntheticSpec spec = load_synthetic_spec(spec_path);
  write_sequence(generate_synthetic(spec), out_dir);
  fmt::print("wrote {} frames of {}x{} to {}\n", spec.frames, spec.width_px, spec.height_px, out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topotrack: merge-tree cloud tracking with partial fused Gromov-Wasserstein matching"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run = app.add_subcommand("run", "Track cloud systems through a directory of .grid frames");
  run->add_option("--config", flags.config_path, "Flat JSON run configuration");
  run->add_option("--preset", flags.preset, "Parameter preset")
      ->check(CLI::IsMember(preset_names()));
  run->add_option("--jobs", flags.jobs, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--dump-couplings", flags.dump_couplings, "Write couplings.csv");
  run->add_flag("--dump-trees", flags.dump_trees, "Write simplified merge trees per frame");
  run->allow_extras();
  run->footer("Any config key can be overridden with --key value, e.g. --alpha 0.3 --m-range 0.6,0.9");

  std::string spec_path, out_dir;
  auto* synth = app.add_subcommand("synth", "Render a synthetic blob scenario to .grid frames");
  synth->add_option("--spec", spec_path, "Scenario JSON")->required();
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return run_command(flags, run->remaining());
    return synth_command(spec_path, out_dir);
  } catch (const InvalidArgument& e) {
    std::cerr << "topotrack: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "topotrack: " << e.what() << '\n';
    return 1;
  }
}
