#include <fstream>

#include <gtest/gtest.h>

#include "affuse/manifest.hpp"
#include "affuse/synthetic.hpp"
#include "temp_dir.hpp"

namespace affuse {
namespace {

using testing::TempDir;

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_movies = 2;
  spec.segments_per_movie = 12;
  return spec;
}

bool has_finding(const ValidationReport& r, std::string_view message) {
  for (const auto& f : r.findings) {
    if (f.message.find(message) != std::string::npos) return true;
  }
  return false;
}

TEST(Manifest, JsonRoundTrip) {
  Manifest m;
  m.annotations = "ann.csv";
  m.movies = {{"a", 20.0, 4}, {"b", 12.0, 2}};
  m.modalities = {{Modality::sound, 8, {{"a", "f/a.affx"}, {"b", "f/b.affx"}}}};
  const auto back = manifest_from_json(nlohmann::json::parse(manifest_to_json(m).dump()));
  EXPECT_EQ(back.format_version, 1);
  EXPECT_EQ(back.annotations, "ann.csv");
  ASSERT_EQ(back.movies.size(), 2u);
  EXPECT_EQ(back.movies[1].id, "b");
  EXPECT_EQ(back.movies[1].num_segments, 2u);
  ASSERT_EQ(back.modalities.size(), 1u);
  EXPECT_EQ(back.modalities[0].modality, Modality::sound);
  EXPECT_EQ(back.modalities[0].files.at("b"), "f/b.affx");
  EXPECT_EQ(back.dims()[index_of(Modality::sound)], 8u);
  EXPECT_FALSE(back.dims()[index_of(Modality::text)].has_value());
}

TEST(Manifest, MalformedJsonIsConfigError) {
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"movies": []})")), ConfigError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(
                   R"({"format_version":1,"movies":[],"modalities":[{"name":"smell","dim":1,"files":{}}]})")),
               ConfigError);
  TempDir dir("manifest_bad");
  std::ofstream(dir / "manifest.affx.json") << "{ not json";
  EXPECT_THROW(load_manifest(dir / "manifest.affx.json"), ConfigError);
  EXPECT_THROW(load_manifest(dir / "absent.json"), ConfigError);
}

TEST(Manifest, GeneratedDatasetValidates) {
  TempDir dir("manifest_ok");
  const auto m = generate_synthetic_dataset(small_spec(), dir.path());
  const auto report = validate_manifest(load_manifest(dir / "manifest.affx.json"), dir.path());
  EXPECT_TRUE(report.ok()) << report.to_text();
  const auto ds = load_dataset(dir.path());
  EXPECT_EQ(ds.tables.size(), 2u);
  EXPECT_EQ(ds.table("movie02", Modality::text).num_rows(), 12u);
  EXPECT_THROW(ds.table("movie02", Modality::scene), ConfigError);
}

TEST(Manifest, MissingModalityForOneMovieIsReported) {
  TempDir dir("manifest_missing");
  auto m = generate_synthetic_dataset(small_spec(), dir.path());
  m.modalities[1].files.erase("movie02");
  const auto report = validate_manifest(m, dir.path());
  ASSERT_EQ(report.findings.size(), 1u) << report.to_text();
  EXPECT_EQ(report.findings[0].message, "modality set mismatch");
  EXPECT_EQ(report.findings[0].movie, "movie02");
  EXPECT_EQ(report.findings[0].modality, "sound");
}

TEST(Manifest, SegmentCountMismatchIsReported) {
  TempDir dir("manifest_count");
  auto m = generate_synthetic_dataset(small_spec(), dir.path());
  // Shrink the declared duration so the expected segment count drops to 10.
  m.movies[0].duration_s = 50.0;
  m.movies[0].num_segments = 10;
  const auto report = validate_manifest(m, dir.path());
  EXPECT_TRUE(has_finding(report, "segment count mismatch")) << report.to_text();
  for (const auto& f : report.findings) {
    if (f.message == "segment count mismatch") {
      EXPECT_EQ(f.expected, "10");
      EXPECT_EQ(f.found, "12");
    }
  }
}

TEST(Manifest, InconsistentDeclaredSegmentsAndDuration) {
  TempDir dir("manifest_duration");
  auto m = generate_synthetic_dataset(small_spec(), dir.path());
  m.movies[1].num_segments = 11;
  EXPECT_TRUE(has_finding(validate_manifest(m, dir.path()), "num_segments disagrees with duration"));
}

TEST(Manifest, DimMismatchAndWrongFile) {
  TempDir dir("manifest_dim");
  auto m = generate_synthetic_dataset(small_spec(), dir.path());
  m.modalities[0].dim = 99;
  EXPECT_TRUE(has_finding(validate_manifest(m, dir.path()), "feature dim mismatch"));
  m.modalities[0].dim = 16;
  // Point the still entry at the sound file of the same movie.
  m.modalities[0].files["movie01"] = m.modalities[1].files["movie01"];
  EXPECT_TRUE(has_finding(validate_manifest(m, dir.path()), "feature file modality mismatch"));
  m = load_manifest(dir / "manifest.affx.json");
  m.modalities[0].files["movie01"] = m.modalities[0].files["movie02"];
  EXPECT_TRUE(has_finding(validate_manifest(m, dir.path()), "feature file movie id mismatch"));
}

TEST(Manifest, CorruptedOrMissingFilesBecomeFindings) {
  TempDir dir("manifest_corrupt");
  auto m = generate_synthetic_dataset(small_spec(), dir.path());
  {
    std::ofstream f(dir / m.modalities[2].files["movie01"], std::ios::binary | std::ios::trunc);
    f << "JUNKJUNKJUNK";
  }
  std::filesystem::remove(dir / m.modalities[0].files["movie02"]);
  const auto report = validate_manifest(m, dir.path());
  EXPECT_EQ(report.findings.size(), 2u) << report.to_text();
  EXPECT_TRUE(has_finding(report, "bad magic"));
  EXPECT_THROW(load_dataset(dir.path()), ConfigError);
}

TEST(Manifest, StructuralFindings) {
  Manifest m;
  m.format_version = 3;
  m.segment_length_s = 0.0;
  const auto report = validate_manifest(m, "/nonexistent");
  EXPECT_TRUE(has_finding(report, "format_version"));
  EXPECT_TRUE(has_finding(report, "segment_length_s"));
  EXPECT_TRUE(has_finding(report, "no movies"));
  EXPECT_TRUE(has_finding(report, "no modalities"));

  Manifest dup;
  dup.movies = {{"a", 10.0, 2}, {"a", 10.0, 2}};
  dup.modalities = {{Modality::text, 0, {}}, {Modality::text, 4, {{"zzz", "x"}}}};
  const auto r2 = validate_manifest(dup, "/nonexistent");
  EXPECT_TRUE(has_finding(r2, "duplicate movie id"));
  EXPECT_TRUE(has_finding(r2, "duplicate modality entry"));
  EXPECT_TRUE(has_finding(r2, "invalid modality dim"));
  EXPECT_TRUE(has_finding(r2, "file for unlisted movie"));
}

TEST(Manifest, LoadDatasetWithoutManifest) {
  TempDir dir("manifest_none");
  EXPECT_THROW(load_dataset(dir.path()), ConfigError);
}

// Seven movies of 360 segments, five modalities.
class FullManifest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticSpec spec;
    spec.num_movies = 7;
    spec.segments_per_movie = 360;
    spec.sample_rate_hz = 1.0;
    spec.modalities = {{Modality::still, 2, std::nullopt},
                       {Modality::scene, 2, std::nullopt},
                       {Modality::motion, 2, std::nullopt},
                       {Modality::sound, 8, TargetDimension::valence},
                       {Modality::text, 8, TargetDimension::arousal}};
    manifest_ = generate_synthetic_dataset(spec, dir_.path());
  }
  TempDir dir_{"manifest_full"};
  Manifest manifest_;
};

TEST_F(FullManifest, ConsistentDatasetHasNoFindings) {
  EXPECT_EQ(validate_manifest(manifest_, dir_.path()).findings.size(), 0u);
}

TEST_F(FullManifest, OneShortFileIsOneFinding) {
  const auto path = dir_.path() / manifest_.modalities[2].files.at("movie04");
  auto table = read_feature_file(path);
  const auto v = table.values();
  const FeatureTable shorter(table.movie_id(), table.modality(), table.dim(),
                             std::vector<float>(v.begin(), v.begin() + 359 * static_cast<long>(table.dim())),
                             table.frames_per_row());
  write_feature_file(shorter, path);
  const auto report = validate_manifest(manifest_, dir_.path());
  ASSERT_EQ(report.findings.size(), 1u) << report.to_text();
  EXPECT_EQ(report.findings[0].expected, "360");
  EXPECT_EQ(report.findings[0].found, "359");
}

TEST_F(FullManifest, ModalityCoveringSixOfSevenMovies) {
  manifest_.modalities[4].files.erase("movie07");
  const auto report = validate_manifest(manifest_, dir_.path());
  ASSERT_EQ(report.findings.size(), 1u) << report.to_text();
  EXPECT_EQ(report.findings[0].message, "modality set mismatch");
}

}  // namespace
}  // namespace affuse
