#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace topotrack {

/// Physical pixel size in km.
struct Spacing {
  double x_km = 1.0;
  double y_km = 1.0;

  bool operator==(const Spacing&) const = default;
};

/// A planar location in km. Pixel (col, row) sits at (col * x_km, row * y_km).
struct KmPoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const KmPoint&) const = default;
};

double distance(const KmPoint& a, const KmPoint& b);

/// Time-stamped raster of nonnegative values, row-major.
struct ScalarField {
  int width_px = 0;
  int height_px = 0;
  Spacing spacing_km;
  int time_index = 0;
  std::string timestamp;  // optional, informational only
  std::vector<double> values;
  std::vector<std::uint8_t> missing;  // 1 = missing; same length as values

  std::size_t size() const { return values.size(); }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_px) +
           static_cast<std::size_t>(col);
  }
  bool is_missing(std::size_t i) const { return missing[i] != 0; }
  /// Missing pixels read as 0 for every downstream threshold.
  double value_or_zero(std::size_t i) const { return missing[i] ? 0.0 : values[i]; }
  KmPoint location_km(std::size_t i) const;

  bool operator==(const ScalarField&) const = default;
};

/// Fields sharing one grid, ordered in time with consecutive time_index from 0.
struct FieldSequence {
  std::vector<ScalarField> fields;
  double interval_minutes = 15.0;
};

/// Throws InvalidArgument when an invariant of the field does not hold.
void validate(const ScalarField& field);
void validate(const FieldSequence& sequence);

/// Text grid I/O. Header line `width height spacing_x spacing_y [timestamp]`,
/// then `height` rows of `width` values; `NA` marks a missing pixel.
ScalarField read_grid(const std::filesystem::path& path);
void write_grid(const ScalarField& field, const std::filesystem::path& path);

/// Loads every `*.grid` file in `directory`, in lexicographic filename order.
FieldSequence load_sequence(const std::filesystem::path& directory, double interval_minutes,
                            int jobs = 1);

/// Writes `frame_0000.grid`, `frame_0001.grid`, ... into `directory`.
void write_sequence(const FieldSequence& sequence, const std::filesystem::path& directory);

/// Integer label raster; 0 is background.
struct LabelGrid {
  int width_px = 0;
  int height_px = 0;
  std::vector<std::uint32_t> labels;

  bool operator==(const LabelGrid&) const = default;
};

/// Binary PGM (P5) with maxval 65535, big-endian samples.
void write_label_map(const LabelGrid& grid, const std::filesystem::path& path);
LabelGrid read_label_map(const std::filesystem::path& path);

/// One Gaussian blob followed over time; `centers` holds one km position per frame.
struct BlobTrack {
  double amplitude = 1.0;
  double width_km = 1.0;
  std::vector<KmPoint> centers;
};

struct SyntheticSpec {
  int width_px = 0;
  int height_px = 0;
  Spacing spacing_km;
  int frames = 0;
  double interval_minutes = 15.0;
  std::vector<BlobTrack> blobs;
};

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
nlohmann::json to_json(const SyntheticSpec& spec);

/// value(p, t) = sum_b amplitude_b * exp(-|p_km - center_b(t)|^2 / (2 width_b^2)).
FieldSequence generate_synthetic(const SyntheticSpec& spec);

}  // namespace topotrack
