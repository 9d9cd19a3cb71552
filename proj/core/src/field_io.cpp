#include "topotrack/field_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include <fmt/format.h>

#include "topotrack/error.hpp"

namespace topotrack {

namespace fs = std::filesystem;

double distance(const KmPoint& a, const KmPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

KmPoint ScalarField::location_km(std::size_t i) const {
  const auto w = static_cast<std::size_t>(width_px);
  return {static_cast<double>(i % w) * spacing_km.x_km,
          static_cast<double>(i / w) * spacing_km.y_km};
}

void validate(const ScalarField& field) {
  if (field.width_px <= 0 || field.height_px <= 0) {
    throw InvalidArgument(fmt::format("field {}: dimensions must be positive (got {}x{})",
                                      field.time_index, field.width_px, field.height_px));
  }
  const auto n = static_cast<std::size_t>(field.width_px) * static_cast<std::size_t>(field.height_px);
  if (field.values.size() != n || field.missing.size() != n) {
    throw InvalidArgument(fmt::format("field {}: expected {} values, got {} (missing mask {})",
                                      field.time_index, n, field.values.size(),
                                      field.missing.size()));
  }
  if (!(field.spacing_km.x_km > 0.0) || !(field.spacing_km.y_km > 0.0)) {
    throw InvalidArgument(fmt::format("field {}: spacing must be positive", field.time_index));
  }
  if (field.time_index < 0) {
    throw InvalidArgument("field time_index must be >= 0");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (field.missing[i]) continue;
    const double v = field.values[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument(fmt::format("field {}: pixel {} has invalid value {}",
                                        field.time_index, i, v));
    }
  }
}

void validate(const FieldSequence& sequence) {
  if (!(sequence.interval_minutes > 0.0)) {
    throw InvalidArgument("interval_minutes must be positive");
  }
  for (std::size_t t = 0; t < sequence.fields.size(); ++t) {
    const auto& f = sequence.fields[t];
    validate(f);
    if (f.time_index != static_cast<int>(t)) {
      throw InvalidArgument(fmt::format("frame {} has time_index {}", t, f.time_index));
    }
    const auto& f0 = sequence.fields.front();
    if (f.width_px != f0.width_px || f.height_px != f0.height_px || !(f.spacing_km == f0.spacing_km)) {
      throw InvalidArgument(fmt::format("frame {} grid differs from frame 0", t));
    }
  }
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

[[noreturn]] void load_fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw LoadError(fmt::format("{}:{}: {}", path.string(), line, what));
}

}  // namespace

ScalarField read_grid(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open file", path.string()));

  ScalarField field;
  std::string line;
  std::size_t line_no = 0;

  // Header; blank lines before it are tolerated.
  std::vector<std::string_view> tok;
  while (std::getline(in, line)) {
    ++line_no;
    tok = split_ws(line);
    if (!tok.empty()) break;
  }
  if (tok.empty()) load_fail(path, line_no, "missing header");
  if (tok.size() < 4 || tok.size() > 5) {
    load_fail(path, line_no, "header must be `width height spacing_x spacing_y [timestamp]`");
  }
  if (!parse_number(tok[0], field.width_px) || !parse_number(tok[1], field.height_px) ||
      field.width_px <= 0 || field.height_px <= 0) {
    load_fail(path, line_no, "invalid grid dimensions");
  }
  if (!parse_number(tok[2], field.spacing_km.x_km) || !parse_number(tok[3], field.spacing_km.y_km) ||
      !(field.spacing_km.x_km > 0.0) || !(field.spacing_km.y_km > 0.0) ||
      !std::isfinite(field.spacing_km.x_km) || !std::isfinite(field.spacing_km.y_km)) {
    load_fail(path, line_no, "invalid pixel spacing");
  }
  if (tok.size() == 5) field.timestamp = std::string(tok[4]);

  const auto n = static_cast<std::size_t>(field.width_px) * static_cast<std::size_t>(field.height_px);
  field.values.reserve(n);
  field.missing.reserve(n);

  int rows = 0;
  while (rows < field.height_px && std::getline(in, line)) {
    ++line_no;
    tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != static_cast<std::size_t>(field.width_px)) {
      load_fail(path, line_no,
                fmt::format("expected {} values, found {}", field.width_px, tok.size()));
    }
    for (auto t : tok) {
      if (t == "NA") {
        field.values.push_back(0.0);
        field.missing.push_back(1);
        continue;
      }
      double v = 0.0;
      if (!parse_number(t, v) || !std::isfinite(v)) {
        load_fail(path, line_no, fmt::format("invalid value `{}`", t));
      }
      if (v < 0.0) load_fail(path, line_no, fmt::format("negative value {}", t));
      field.values.push_back(v);
      field.missing.push_back(0);
    }
    ++rows;
  }
  if (rows != field.height_px) {
    load_fail(path, line_no, fmt::format("expected {} rows, found {}", field.height_px, rows));
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!split_ws(line).empty()) load_fail(path, line_no, "trailing data after last row");
  }
  return field;
}

void write_grid(const ScalarField& field, const fs::path& path) {
  validate(field);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  std::string buf;
  buf += fmt::format("{} {} {} {}", field.width_px, field.height_px, field.spacing_km.x_km,
                     field.spacing_km.y_km);
  if (!field.timestamp.empty()) buf += fmt::format(" {}", field.timestamp);
  buf += '\n';
  for (int r = 0; r < field.height_px; ++r) {
    for (int c = 0; c < field.width_px; ++c) {
      const auto i = field.index(c, r);
      if (c) buf += ' ';
      // Shortest round-trip representation keeps reloads bit-exact.
      buf += field.missing[i] ? std::string("NA") : fmt::format("{}", field.values[i]);
    }
    buf += '\n';
  }
  out << buf;
  if (!out) throw Error(fmt::format("{}: write failed", path.string()));
}

FieldSequence load_sequence(const fs::path& directory, double interval_minutes, int jobs) {
  if (!(interval_minutes > 0.0)) throw InvalidArgument("interval_minutes must be positive");
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    throw LoadError(fmt::format("{}: not a directory", directory.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".grid") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (files.empty()) {
    throw LoadError(fmt::format("{}: no .grid files found", directory.string()));
  }

  FieldSequence seq;
  seq.interval_minutes = interval_minutes;
  seq.fields.resize(files.size());
  const std::size_t workers = std::max<std::size_t>(1, static_cast<std::size_t>(std::max(jobs, 1)));
  for (std::size_t begin = 0; begin < files.size(); begin += workers) {
    const std::size_t end = std::min(files.size(), begin + workers);
    std::vector<std::future<ScalarField>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                   [&files, i] { return read_grid(files[i]); }));
    }
    for (std::size_t i = begin; i < end; ++i) seq.fields[i] = pending[i - begin].get();
  }

  const auto& first = seq.fields.front();
  for (std::size_t t = 0; t < seq.fields.size(); ++t) {
    auto& f = seq.fields[t];
    f.time_index = static_cast<int>(t);
    if (f.width_px != first.width_px || f.height_px != first.height_px) {
      throw LoadError(fmt::format("{}:1: grid is {}x{} but {} is {}x{}", files[t].string(),
                                  f.width_px, f.height_px, files[0].filename().string(),
                                  first.width_px, first.height_px));
    }
    if (!(f.spacing_km == first.spacing_km)) {
      throw LoadError(fmt::format("{}:1: pixel spacing differs from {}", files[t].string(),
                                  files[0].filename().string()));
    }
  }
  return seq;
}

void write_sequence(const FieldSequence& sequence, const fs::path& directory) {
  fs::create_directories(directory);
  for (std::size_t t = 0; t < sequence.fields.size(); ++t) {
    write_grid(sequence.fields[t], directory / fmt::format("frame_{:04}.grid", t));
  }
}

void write_label_map(const LabelGrid& grid, const fs::path& path) {
  const auto n = static_cast<std::size_t>(grid.width_px) * static_cast<std::size_t>(grid.height_px);
  if (grid.width_px <= 0 || grid.height_px <= 0 || grid.labels.size() != n) {
    throw InvalidArgument("label grid dimensions do not match its data");
  }
  std::string data;
  data.reserve(2 * n + 32);
  data += fmt::format("P5\n{} {}\n65535\n", grid.width_px, grid.height_px);
  for (auto label : grid.labels) {
    if (label > 65535u) {
      throw InvalidArgument(fmt::format("label {} does not fit in 16 bits", label));
    }
    data.push_back(static_cast<char>((label >> 8) & 0xffu));
    data.push_back(static_cast<char>(label & 0xffu));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(fmt::format("{}: write failed", path.string()));
}

LabelGrid read_label_map(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(fmt::format("{}: cannot open file", path.string()));
  std::string magic;
  LabelGrid grid;
  int maxval = 0;
  in >> magic >> grid.width_px >> grid.height_px >> maxval;
  if (!in || magic != "P5" || grid.width_px <= 0 || grid.height_px <= 0 || maxval != 65535) {
    throw LoadError(fmt::format("{}: not a 16-bit P5 label map", path.string()));
  }
  in.get();  // single whitespace byte after maxval
  const auto n = static_cast<std::size_t>(grid.width_px) * static_cast<std::size_t>(grid.height_px);
  std::vector<unsigned char> raw(2 * n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw LoadError(fmt::format("{}: truncated pixel data", path.string()));
  }
  grid.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    grid.labels[i] = (static_cast<std::uint32_t>(raw[2 * i]) << 8) | raw[2 * i + 1];
  }
  return grid;
}

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc) {
  SyntheticSpec spec;
  try {
    spec.width_px = doc.at("width_px").get<int>();
    spec.height_px = doc.at("height_px").get<int>();
    const auto& sp = doc.at("spacing_km");
    if (sp.is_array()) {
      spec.spacing_km = {sp.at(0).get<double>(), sp.at(1).get<double>()};
    } else {
      spec.spacing_km = {sp.get<double>(), sp.get<double>()};
    }
    spec.frames = doc.at("frames").get<int>();
    if (doc.contains("interval_minutes")) spec.interval_minutes = doc.at("interval_minutes").get<double>();
    for (const auto& b : doc.at("blobs")) {
      BlobTrack blob;
      blob.amplitude = b.at("amplitude").get<double>();
      blob.width_km = b.at("width_km").get<double>();
      for (const auto& c : b.at("centers")) {
        blob.centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      }
      spec.blobs.push_back(std::move(blob));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(fmt::format("synthetic scenario: {}", e.what()));
  }
  return spec;
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open file", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_synthetic_spec(doc);
}

nlohmann::json to_json(const SyntheticSpec& spec) {
  nlohmann::json doc;
  doc["width_px"] = spec.width_px;
  doc["height_px"] = spec.height_px;
  doc["spacing_km"] = {spec.spacing_km.x_km, spec.spacing_km.y_km};
  doc["frames"] = spec.frames;
  doc["interval_minutes"] = spec.interval_minutes;
  doc["blobs"] = nlohmann::json::array();
  for (const auto& b : spec.blobs) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : b.centers) centers.push_back({c.x, c.y});
    doc["blobs"].push_back({{"amplitude", b.amplitude}, {"width_km", b.width_km}, {"centers", centers}});
  }
  return doc;
}

FieldSequence generate_synthetic(const SyntheticSpec& spec) {
  if (spec.width_px <= 0 || spec.height_px <= 0 || spec.frames <= 0) {
    throw InvalidArgument("synthetic scenario needs positive width_px, height_px and frames");
  }
  if (!(spec.spacing_km.x_km > 0.0) || !(spec.spacing_km.y_km > 0.0)) {
    throw InvalidArgument("synthetic scenario needs positive spacing_km");
  }
  for (std::size_t b = 0; b < spec.blobs.size(); ++b) {
    const auto& blob = spec.blobs[b];
    if (!(blob.amplitude > 0.0)) throw InvalidArgument(fmt::format("blob {}: amplitude must be positive", b));
    if (!(blob.width_km > 0.0)) throw InvalidArgument(fmt::format("blob {}: width_km must be positive", b));
    if (blob.centers.size() != static_cast<std::size_t>(spec.frames)) {
      throw InvalidArgument(fmt::format("blob {}: expected {} centers, got {}", b, spec.frames,
                                        blob.centers.size()));
    }
  }

  FieldSequence seq;
  seq.interval_minutes = spec.interval_minutes;
  const auto n = static_cast<std::size_t>(spec.width_px) * static_cast<std::size_t>(spec.height_px);
  for (int t = 0; t < spec.frames; ++t) {
    ScalarField f;
    f.width_px = spec.width_px;
    f.height_px = spec.height_px;
    f.spacing_km = spec.spacing_km;
    f.time_index = t;
    f.values.assign(n, 0.0);
    f.missing.assign(n, 0);
    for (const auto& blob : spec.blobs) {
      const KmPoint c = blob.centers[static_cast<std::size_t>(t)];
      const double inv = 1.0 / (2.0 * blob.width_km * blob.width_km);
      for (std::size_t i = 0; i < n; ++i) {
        const KmPoint p = f.location_km(i);
        const double dx = p.x - c.x;
        const double dy = p.y - c.y;
        f.values[i] += blob.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
    seq.fields.push_back(std::move(f));
  }
  return seq;
}

}  // namespace topotrack
