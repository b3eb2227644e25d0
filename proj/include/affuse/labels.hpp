#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "affuse/error.hpp"
#include "affuse/feature_store.hpp"
#include "affuse/manifest.hpp"
#include "affuse/modality.hpp"
#include "affuse/savgol.hpp"

namespace affuse {

inline constexpr int kNumClasses = 7;

struct QuantizerConfig {
  int num_bins = kNumClasses;
  double range_lo = -1.0;
  double range_hi = 1.0;

  void validate() const {
    if (num_bins < 2) throw InvalidArgument("quantizer needs at least 2 bins");
    if (!(range_lo < range_hi)) throw InvalidArgument("quantizer range_lo must be below range_hi");
  }

  double bin_width() const noexcept { return (range_hi - range_lo) / num_bins; }
};

// Uniform bins over [range_lo, range_hi]; out-of-range values clamp to the end bins.
inline int quantize(double value, const QuantizerConfig& config) {
  config.validate();
  if (std::isnan(value)) throw DataError("cannot quantize NaN");
  const double scaled = (value - config.range_lo) / (config.range_hi - config.range_lo) * config.num_bins;
  if (!(scaled >= 0.0)) return 0;
  if (scaled >= config.num_bins) return config.num_bins - 1;
  return static_cast<int>(std::floor(scaled));
}

// Continuous rating track; sample i sits at start_s + i / sample_rate_hz.
struct AnnotationTrack {
  std::string movie_id;
  TargetDimension dimension = TargetDimension::valence;
  AnnotationKind kind = AnnotationKind::experienced;
  double sample_rate_hz = 1.0;
  double start_s = 0.0;
  std::vector<double> values;

  double end_s() const noexcept { return start_s + static_cast<double>(values.size()) / sample_rate_hz; }
};

inline AnnotationTrack smooth_track(const AnnotationTrack& track, const SmootherConfig& config) {
  if (track.values.empty()) throw InvalidArgument("cannot smooth an empty track");
  AnnotationTrack out = track;
  out.values = savgol_filter(track.values, config);
  return out;
}

// Affine map of [min, max] onto [-1, 1]. Constant tracks become all zeros.
inline AnnotationTrack rescale_unit(const AnnotationTrack& track) {
  if (track.values.empty()) throw InvalidArgument("cannot rescale an empty track");
  for (std::size_t i = 0; i < track.values.size(); ++i) {
    if (!std::isfinite(track.values[i])) throw DataError("non-finite annotation value in " + track.movie_id, i);
  }
  const auto [lo_it, hi_it] = std::minmax_element(track.values.begin(), track.values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  AnnotationTrack out = track;
  if (hi == lo) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (double& v : out.values) v = std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0);
  return out;
}

// Mean of the samples whose timestamps fall in [window.start_s, window.end_s).
inline double segment_label(const AnnotationTrack& track, const SegmentWindow& window) {
  constexpr double eps = 1e-9;
  if (!(track.sample_rate_hz > 0.0)) throw InvalidArgument("track sample rate must be positive");
  if (window.start_s < track.start_s - eps || window.end_s > track.end_s() + eps) {
    throw InvalidArgument(fmt::format("window [{}, {}) lies outside track {} [{}, {})", window.start_s, window.end_s,
                                      track.movie_id, track.start_s, track.end_s()));
  }
  const auto first = static_cast<std::ptrdiff_t>(std::ceil((window.start_s - track.start_s) * track.sample_rate_hz - eps));
  const auto last = static_cast<std::ptrdiff_t>(std::ceil((window.end_s - track.start_s) * track.sample_rate_hz - eps));
  const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
  const std::size_t hi = std::min(static_cast<std::size_t>(std::max<std::ptrdiff_t>(last, 0)), track.values.size());
  if (lo >= hi) {
    throw InvalidArgument(fmt::format("window [{}, {}) contains no samples of track {}", window.start_s, window.end_s,
                                      track.movie_id));
  }
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += track.values[i];
  return sum / static_cast<double>(hi - lo);
}

// ---------------------------------------------------------------------------
// Segment labels

struct SegmentLabel {
  SegmentWindow window;
  double valence_cont = 0.0;
  int valence_class = 0;
  double arousal_cont = 0.0;
  int arousal_class = 0;

  int class_for(TargetDimension d) const noexcept {
    return d == TargetDimension::valence ? valence_class : arousal_class;
  }

  friend bool operator==(const SegmentLabel&, const SegmentLabel&) = default;
};

struct LabeledSegment {
  SegmentWindow window;
  ModalityMap<std::vector<float>> features;
  int valence_class = 0;
  int arousal_class = 0;
  double valence_cont = 0.0;
  double arousal_cont = 0.0;

  int class_for(TargetDimension d) const noexcept {
    return d == TargetDimension::valence ? valence_class : arousal_class;
  }
};

struct LabelPipelineConfig {
  AnnotationKind kind = AnnotationKind::experienced;
  SmootherConfig smoother;
  QuantizerConfig quantizer;
};

using TrackKey = std::tuple<std::string, TargetDimension, AnnotationKind>;
using TrackSet = std::map<TrackKey, AnnotationTrack>;

inline TrackSet index_tracks(std::vector<AnnotationTrack> tracks) {
  TrackSet out;
  for (auto& t : tracks) {
    TrackKey key{t.movie_id, t.dimension, t.kind};
    if (out.contains(key)) {
      throw ConfigError(fmt::format("duplicate {} {} track for movie {}", to_string(t.kind), to_string(t.dimension),
                                    t.movie_id));
    }
    out.emplace(std::move(key), std::move(t));
  }
  return out;
}

// smooth -> rescale -> per-window mean -> quantize, for every segment of every movie.
inline std::vector<SegmentLabel> label_segments(const TrackSet& tracks, const std::vector<MovieEntry>& movies,
                                                double segment_length, const LabelPipelineConfig& config) {
  config.smoother.validate();
  config.quantizer.validate();
  std::vector<SegmentLabel> out;
  for (const auto& movie : movies) {
    auto prepared = [&](TargetDimension d) {
      auto it = tracks.find(TrackKey{movie.id, d, config.kind});
      if (it == tracks.end()) {
        throw ConfigError(fmt::format("missing {} {} annotation track for movie {}", to_string(config.kind),
                                      to_string(d), movie.id));
      }
      return rescale_unit(smooth_track(it->second, config.smoother));
    };
    const AnnotationTrack valence = prepared(TargetDimension::valence);
    const AnnotationTrack arousal = prepared(TargetDimension::arousal);
    for (auto& window : align_segments(movie.duration_s, segment_length, movie.id)) {
      SegmentLabel label;
      label.valence_cont = segment_label(valence, window);
      label.arousal_cont = segment_label(arousal, window);
      label.valence_class = quantize(label.valence_cont, config.quantizer);
      label.arousal_class = quantize(label.arousal_cont, config.quantizer);
      label.window = std::move(window);
      out.push_back(std::move(label));
    }
  }
  return out;
}

// Joins labels with the pooled feature rows of every modality in the dataset.
inline std::vector<LabeledSegment> attach_features(const std::vector<SegmentLabel>& labels, const Dataset& dataset) {
  std::vector<LabeledSegment> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    LabeledSegment seg;
    seg.window = label.window;
    seg.valence_class = label.valence_class;
    seg.arousal_class = label.arousal_class;
    seg.valence_cont = label.valence_cont;
    seg.arousal_cont = label.arousal_cont;
    for (const auto& entry : dataset.manifest.modalities) {
      const FeatureTable& table = dataset.table(label.window.movie_id, entry.modality);
      if (label.window.index >= table.num_rows()) {
        throw ConfigError(fmt::format("segment {} of movie {} has no {} feature row", label.window.index,
                                      label.window.movie_id, to_string(entry.modality)));
      }
      auto row = table.row(label.window.index);
      seg.features[index_of(entry.modality)] = std::vector<float>(row.begin(), row.end());
    }
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::vector<LabeledSegment> preprocess_annotations(const TrackSet& tracks, const Dataset& dataset,
                                                          const LabelPipelineConfig& config) {
  return attach_features(label_segments(tracks, dataset.manifest.movies, dataset.manifest.segment_length_s, config),
                         dataset);
}

// ---------------------------------------------------------------------------
// Delimited text formats

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = line.find(sep, pos);
    auto field = line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    out.push_back(field);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("cannot parse number '" + std::string(s) + "'", line_no);
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::size_t line_no) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("cannot parse integer '" + std::string(s) + "'", line_no);
  }
  return v;
}

// Yields non-blank, non-comment lines with their 1-based line numbers.
template <typename Fn>
void for_each_data_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v(line);
    while (!v.empty() && (v.back() == '\r' || v.back() == ' ')) v.remove_suffix(1);
    if (v.empty() || v.front() == '#') continue;
    fn(v, line_no);
  }
}

}  // namespace detail

inline constexpr std::string_view kAnnotationHeader = "movie_id,dimension,kind,time_s,value";

// Annotation CSV: header `movie_id,dimension,kind,time_s,value`, one row per sample.
// Samples of one track must be uniformly spaced; rows may appear in any order.
inline std::vector<AnnotationTrack> read_annotations(std::istream& in) {
  std::map<TrackKey, std::vector<std::pair<double, double>>> samples;
  bool header_seen = false;
  detail::for_each_data_line(in, [&](std::string_view line, std::size_t line_no) {
    if (!header_seen) {
      if (line != kAnnotationHeader) {
        throw DataError("annotation header must be '" + std::string(kAnnotationHeader) + "'", line_no);
      }
      header_seen = true;
      return;
    }
    const auto f = detail::split_fields(line);
    if (f.size() != 5) throw DataError("expected 5 fields", line_no);
    TrackKey key{std::string(f[0]), parse_target_dimension(f[1]), parse_annotation_kind(f[2])};
    const double t = detail::parse_double(f[3], line_no);
    const double v = detail::parse_double(f[4], line_no);
    if (!std::isfinite(t) || !std::isfinite(v)) throw DataError("non-finite annotation sample", line_no);
    samples[key].emplace_back(t, v);
  });
  if (!header_seen) throw DataError("annotation file is empty");

  std::vector<AnnotationTrack> out;
  for (auto& [key, pts] : samples) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    AnnotationTrack track;
    std::tie(track.movie_id, track.dimension, track.kind) = key;
    track.start_s = pts.front().first;
    if (pts.size() >= 2) {
      const double span = pts.back().first - pts.front().first;
      if (!(span > 0.0)) throw DataError("annotation track " + track.movie_id + " has duplicate timestamps");
      track.sample_rate_hz = static_cast<double>(pts.size() - 1) / span;
      const double period = 1.0 / track.sample_rate_hz;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double expected = track.start_s + static_cast<double>(i) * period;
        if (std::fabs(pts[i].first - expected) > 1e-3 * period) {
          throw DataError(fmt::format("annotation track {}/{}/{} is not uniformly sampled", track.movie_id,
                                      to_string(track.dimension), to_string(track.kind)),
                          i);
        }
      }
    }
    track.values.reserve(pts.size());
    for (const auto& p : pts) track.values.push_back(p.second);
    out.push_back(std::move(track));
  }
  return out;
}

inline std::vector<AnnotationTrack> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open annotation file '" + path.string() + "'");
  return read_annotations(in);
}

inline void write_annotations(std::ostream& out, const std::vector<AnnotationTrack>& tracks) {
  out << kAnnotationHeader << '\n';
  for (const auto& t : tracks) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      out << fmt::format("{},{},{},{},{}\n", t.movie_id, to_string(t.dimension), to_string(t.kind),
                         t.start_s + static_cast<double>(i) / t.sample_rate_hz, t.values[i]);
    }
  }
}

inline constexpr std::string_view kLabelHeader = "movie_id,index,valence_cont,valence_class,arousal_cont,arousal_class";

// Labeled-segment CSV. `echo` lines are written as leading '#' comments.
inline void write_labels(std::ostream& out, const std::vector<SegmentLabel>& labels,
                         const std::vector<std::pair<std::string, std::string>>& echo = {}) {
  for (const auto& [k, v] : echo) out << "# " << k << '=' << v << '\n';
  out << kLabelHeader << '\n';
  for (const auto& l : labels) {
    out << fmt::format("{},{},{},{},{},{}\n", l.window.movie_id, l.window.index, l.valence_cont, l.valence_class,
                       l.arousal_cont, l.arousal_class);
  }
}

// Reads labels back; windows are rebuilt from `segment_length`.
inline std::vector<SegmentLabel> read_labels(std::istream& in, double segment_length) {
  std::vector<SegmentLabel> out;
  bool header_seen = false;
  detail::for_each_data_line(in, [&](std::string_view line, std::size_t line_no) {
    if (!header_seen) {
      if (line != kLabelHeader) throw DataError("label header must be '" + std::string(kLabelHeader) + "'", line_no);
      header_seen = true;
      return;
    }
    const auto f = detail::split_fields(line);
    if (f.size() != 6) throw DataError("expected 6 fields", line_no);
    SegmentLabel l;
    l.window.movie_id = std::string(f[0]);
    l.window.index = detail::parse_int<std::size_t>(f[1], line_no);
    l.window.start_s = static_cast<double>(l.window.index) * segment_length;
    l.window.end_s = static_cast<double>(l.window.index + 1) * segment_length;
    l.valence_cont = detail::parse_double(f[2], line_no);
    l.valence_class = detail::parse_int<int>(f[3], line_no);
    l.arousal_cont = detail::parse_double(f[4], line_no);
    l.arousal_class = detail::parse_int<int>(f[5], line_no);
    if (l.valence_class < 0 || l.valence_class >= kNumClasses || l.arousal_class < 0 ||
        l.arousal_class >= kNumClasses) {
      throw DataError("class index out of range", line_no);
    }
    out.push_back(std::move(l));
  });
  if (!header_seen) throw DataError("label file is empty");
  return out;
}

inline std::vector<SegmentLabel> read_labels(const std::filesystem::path& path, double segment_length) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open label file '" + path.string() + "'");
  return read_labels(in, segment_length);
}

}  // namespace affuse
