#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "temp_dir.hpp"
#include "topotrack/error.hpp"
#include "topotrack/field_io.hpp"

using namespace topotrack;
namespace fs = std::filesystem;

namespace {

using gen::TempDir;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(FieldIo, ZeroFieldLoads) {
  TempDir dir;
  write_text(dir.path() / "a.grid", "2 2 1.0 1.0\n0 0\n0 0\n");
  const FieldSequence seq = load_sequence(dir.path(), 15.0);
  ASSERT_EQ(seq.fields.size(), 1u);
  const auto& f = seq.fields[0];
  EXPECT_EQ(f.width_px, 2);
  EXPECT_EQ(f.height_px, 2);
  for (double v : f.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(f.time_index, 0);
}

TEST(FieldIo, MissingTokenAndTimestamp) {
  TempDir dir;
  write_text(dir.path() / "f.grid", "3 1 2.0 3.0 2020-01-01T00:00\n1.5 NA 2\n");
  const ScalarField f = read_grid(dir.path() / "f.grid");
  EXPECT_EQ(f.spacing_km, (Spacing{2.0, 3.0}));
  EXPECT_EQ(f.timestamp, "2020-01-01T00:00");
  EXPECT_FALSE(f.is_missing(0));
  EXPECT_TRUE(f.is_missing(1));
  EXPECT_EQ(f.value_or_zero(1), 0.0);
  EXPECT_EQ(f.values[2], 2.0);
}

TEST(FieldIo, DifferingWidthNamesFile) {
  TempDir dir;
  write_text(dir.path() / "frame_0.grid", "2 2 1 1\n0 0\n0 0\n");
  write_text(dir.path() / "frame_1.grid", "3 2 1 1\n0 0 0\n0 0 0\n");
  try {
    load_sequence(dir.path(), 15.0);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("frame_1.grid"), std::string::npos) << e.what();
  }
}

TEST(FieldIo, MalformedInputsReportFileAndLine) {
  TempDir dir;
  const auto p = dir.path() / "bad.grid";
  write_text(p, "2 2 1 1\n0 -1\n0 0\n");
  try {
    read_grid(p);
    FAIL() << "negative value accepted";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.grid:2"), std::string::npos) << e.what();
  }
  write_text(p, "2 x 1 1\n");
  EXPECT_THROW(read_grid(p), LoadError);
  write_text(p, "2 2 1 1\n0 0\n0\n");
  EXPECT_THROW(read_grid(p), LoadError);
  write_text(p, "2 1 0 1\n0 0\n");
  EXPECT_THROW(read_grid(p), LoadError);
}

TEST(FieldIo, MissingDirectoryAndEmptyDirectory) {
  TempDir dir;
  EXPECT_THROW(load_sequence(dir.path() / "nope", 15.0), LoadError);
  EXPECT_THROW(load_sequence(dir.path(), 15.0), LoadError);
  EXPECT_THROW(load_sequence(dir.path(), 0.0), InvalidArgument);
}

TEST(FieldIo, SyntheticRoundTripIsBitExact) {
  TempDir dir;
  auto spec = scenarios::translating_blob(16, 3);
  spec.spacing_km = {0.7, 1.3};
  const FieldSequence seq = generate_synthetic(spec);
  write_sequence(seq, dir.path());
  for (int jobs : {1, 3}) {
    const FieldSequence back = load_sequence(dir.path(), spec.interval_minutes, jobs);
    ASSERT_EQ(back.fields.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(back.fields[t], seq.fields[t]);
  }
}

TEST(FieldIo, RoundTripPropertyWithMissingPixels) {
  gen::Rng rng(11);
  TempDir dir;
  for (int k = 0; k < 25; ++k) {
    ScalarField f = gen::random_grid(rng, rng.integer(1, 9), rng.integer(1, 9), 0, 0.2);
    for (auto& v : f.values) v = rng.uniform(0.0, 1e3) * std::pow(10.0, rng.integer(-8, 8));
    f.spacing_km = {rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0)};
    write_grid(f, dir.path() / "x.grid");
    ScalarField back = read_grid(dir.path() / "x.grid");
    ASSERT_EQ(back.missing, f.missing);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!f.is_missing(i)) {
        EXPECT_EQ(back.values[i], f.values[i]);
      }
    }
    EXPECT_EQ(back.spacing_km, f.spacing_km);
  }
}

TEST(FieldIo, SyntheticIsPure) {
  const auto spec = scenarios::splitting_blob(32, 6, 2);
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  for (std::size_t t = 0; t < a.fields.size(); ++t) EXPECT_EQ(a.fields[t], b.fields[t]);
}

TEST(FieldIo, StaticBlobPeaksAtCenter) {
  SyntheticSpec spec;
  spec.width_px = 21;
  spec.height_px = 21;
  spec.frames = 3;
  spec.blobs = {BlobTrack{10.0, 2.0, {{7, 9}, {7, 9}, {7, 9}}}};
  const auto seq = generate_synthetic(spec);
  for (const auto& f : seq.fields) {
    EXPECT_EQ(f.values, seq.fields[0].values);
    const auto it = std::max_element(f.values.begin(), f.values.end());
    EXPECT_EQ(static_cast<std::size_t>(it - f.values.begin()), f.index(7, 9));
    EXPECT_DOUBLE_EQ(*it, 10.0);
  }
}

TEST(FieldIo, TranslatingBlobArgmaxMovesTwoColumns) {
  SyntheticSpec spec;
  spec.width_px = 40;
  spec.height_px = 10;
  spec.frames = 8;
  BlobTrack blob{5.0, 2.0, {}};
  for (int t = 0; t < 8; ++t) blob.centers.push_back({5.0 + 2.0 * t, 4.0});
  spec.blobs = {blob};
  const auto seq = generate_synthetic(spec);
  for (int t = 0; t < 8; ++t) {
    const auto& v = seq.fields[static_cast<std::size_t>(t)].values;
    const auto idx = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    EXPECT_EQ(idx % 40, 5 + 2 * t);
  }
}

TEST(FieldIo, TwoSeparatedBlobsHaveTwoMaxima) {
  SyntheticSpec spec;
  spec.width_px = 60;
  spec.height_px = 20;
  spec.frames = 1;
  spec.blobs = {BlobTrack{8.0, 3.0, {{10, 10}}}, BlobTrack{6.0, 3.0, {{50, 10}}}};
  const auto f = generate_synthetic(spec).fields[0];
  EXPECT_EQ(oracle::local_maxima(f).size(), 2u);
}

TEST(FieldIo, SyntheticValidation) {
  SyntheticSpec spec;
  spec.width_px = 4;
  spec.height_px = 4;
  spec.frames = 1;
  spec.blobs = {BlobTrack{0.0, 1.0, {{1, 1}}}};
  EXPECT_THROW(generate_synthetic(spec), InvalidArgument);
  spec.blobs = {BlobTrack{1.0, -1.0, {{1, 1}}}};
  EXPECT_THROW(generate_synthetic(spec), InvalidArgument);
  spec.blobs = {BlobTrack{1.0, 1.0, {}}};
  EXPECT_THROW(generate_synthetic(spec), InvalidArgument);
}

TEST(FieldIo, SyntheticSpecJsonRoundTrip) {
  const auto spec = scenarios::splitting_blob(32, 5, 2);
  const auto back = parse_synthetic_spec(to_json(spec));
  EXPECT_EQ(back.width_px, spec.width_px);
  EXPECT_EQ(back.frames, spec.frames);
  ASSERT_EQ(back.blobs.size(), 2u);
  EXPECT_EQ(back.blobs[1].centers, spec.blobs[1].centers);
  auto doc = to_json(spec);
  doc["spacing_km"] = 2.5;
  EXPECT_EQ(parse_synthetic_spec(doc).spacing_km, (Spacing{2.5, 2.5}));
  doc.erase("frames");
  EXPECT_THROW(parse_synthetic_spec(doc), Error);
}

TEST(LabelMap, BackgroundIsAllZeroBytes) {
  TempDir dir;
  LabelGrid g{3, 2, std::vector<std::uint32_t>(6, 0)};
  write_label_map(g, dir.path() / "bg.pgm");
  const std::string bytes = read_bytes(dir.path() / "bg.pgm");
  const std::string header = "P5\n3 2\n65535\n";
  ASSERT_EQ(bytes.size(), header.size() + 12);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) EXPECT_EQ(bytes[i], '\0');
}

TEST(LabelMap, RoundTripAndOverflow) {
  TempDir dir;
  LabelGrid g{4, 3, {0, 1, 1, 0, 0, 0, 2, 2, 65535, 0, 2, 0}};
  write_label_map(g, dir.path() / "l.pgm");
  EXPECT_EQ(read_label_map(dir.path() / "l.pgm"), g);
  g.labels[0] = 70000;
  EXPECT_THROW(write_label_map(g, dir.path() / "big.pgm"), InvalidArgument);
}
