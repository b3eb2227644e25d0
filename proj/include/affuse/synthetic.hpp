#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "affuse/feature_store.hpp"
#include "affuse/labels.hpp"
#include "affuse/manifest.hpp"
#include "affuse/neural.hpp"

namespace affuse {

// Gaussian-cluster fixture generator.
//
// Annotation tracks are piecewise constant at random bin centres (one level per
// segment). The class labels they produce through the label pipeline then drive the
// features: an informative modality draws x = separation * e_class + N(0, I), a noise
// modality draws N(0, I) regardless of the labels.
struct SyntheticModality {
  Modality modality = Modality::still;
  std::size_t dim = 16;
  std::optional<TargetDimension> informative_for;
};

struct SyntheticSpec {
  std::size_t num_movies = 3;
  std::size_t segments_per_movie = 600;
  double segment_length_s = kDefaultSegmentLength;
  double sample_rate_hz = 10.0;
  double separation = 6.0;
  // Fraction of segments whose intended-emotion level differs from the experienced one.
  double intended_divergence = 0.2;
  std::uint64_t seed = 7;
  std::vector<SyntheticModality> modalities = {
      {Modality::still, 16, std::nullopt},
      {Modality::sound, 16, TargetDimension::valence},
      {Modality::text, 16, TargetDimension::arousal},
  };
  LabelPipelineConfig pipeline;  // used to derive the classes that features encode
};

inline std::string synthetic_movie_id(std::size_t i) { return fmt::format("movie{:02}", i + 1); }

inline std::vector<AnnotationTrack> synthetic_tracks(const SyntheticSpec& spec) {
  const QuantizerConfig& q = spec.pipeline.quantizer;
  const auto samples_per_segment = static_cast<std::size_t>(std::llround(spec.segment_length_s * spec.sample_rate_hz));
  std::vector<AnnotationTrack> tracks;
  for (std::size_t mv = 0; mv < spec.num_movies; ++mv) {
    for (TargetDimension d : {TargetDimension::valence, TargetDimension::arousal}) {
      Rng rng(mix_seed(spec.seed, mix_seed(mv, 0xA000 + static_cast<std::uint64_t>(d))));
      std::vector<int> experienced(spec.segments_per_movie), intended(spec.segments_per_movie);
      for (std::size_t s = 0; s < spec.segments_per_movie; ++s) {
        experienced[s] = static_cast<int>(rng.below(static_cast<std::uint64_t>(q.num_bins)));
        intended[s] = rng.uniform() < spec.intended_divergence
                          ? static_cast<int>(rng.below(static_cast<std::uint64_t>(q.num_bins)))
                          : experienced[s];
      }
      for (AnnotationKind kind : {AnnotationKind::experienced, AnnotationKind::intended}) {
        const auto& levels = kind == AnnotationKind::experienced ? experienced : intended;
        AnnotationTrack t;
        t.movie_id = synthetic_movie_id(mv);
        t.dimension = d;
        t.kind = kind;
        t.sample_rate_hz = spec.sample_rate_hz;
        for (int level : levels) {
          const double centre = q.range_lo + (level + 0.5) * q.bin_width();
          t.values.insert(t.values.end(), samples_per_segment, centre);
        }
        tracks.push_back(std::move(t));
      }
    }
  }
  return tracks;
}

// Writes manifest.affx.json, features/*.affx and annotations.csv under `root`.
inline Manifest generate_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "features");
  const auto tracks = synthetic_tracks(spec);

  Manifest manifest;
  manifest.segment_length_s = spec.segment_length_s;
  manifest.annotations = "annotations.csv";
  for (std::size_t mv = 0; mv < spec.num_movies; ++mv) {
    manifest.movies.push_back({synthetic_movie_id(mv),
                               static_cast<double>(spec.segments_per_movie) * spec.segment_length_s,
                               spec.segments_per_movie});
  }
  const auto labels = label_segments(index_tracks(tracks), manifest.movies, spec.segment_length_s, spec.pipeline);

  for (const auto& sm : spec.modalities) {
    if (sm.informative_for && sm.dim < static_cast<std::size_t>(spec.pipeline.quantizer.num_bins)) {
      throw InvalidArgument("informative synthetic modality needs dim >= num_bins");
    }
    ModalityEntry entry{sm.modality, sm.dim, {}};
    for (std::size_t mv = 0; mv < spec.num_movies; ++mv) {
      const std::string movie = synthetic_movie_id(mv);
      Rng rng(mix_seed(spec.seed, mix_seed(mv, 0xB000 + index_of(sm.modality))));
      FeatureTable table(movie, sm.modality, sm.dim, spec.segments_per_movie);
      for (std::size_t s = 0; s < spec.segments_per_movie; ++s) {
        auto row = table.row(s);
        for (float& v : row) v = static_cast<float>(rng.normal());
        if (sm.informative_for) {
          const auto& label = labels[mv * spec.segments_per_movie + s];
          row[static_cast<std::size_t>(label.class_for(*sm.informative_for))] += static_cast<float>(spec.separation);
        }
      }
      const std::string rel = fmt::format("features/{}.{}.affx", movie, to_string(sm.modality));
      write_feature_file(table, root / rel);
      entry.files[movie] = rel;
    }
    manifest.modalities.push_back(std::move(entry));
  }

  std::ofstream ann(root / manifest.annotations, std::ios::trunc);
  write_annotations(ann, tracks);
  save_manifest(manifest, root / kManifestFileName);
  return manifest;
}

}  // namespace affuse
