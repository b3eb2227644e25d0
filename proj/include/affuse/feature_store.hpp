#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "affuse/byte_io.hpp"
#include "affuse/error.hpp"
#include "affuse/modality.hpp"

namespace affuse {

inline constexpr double kDefaultSegmentLength = 5.0;

struct SegmentWindow {
  std::string movie_id;
  std::size_t index = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const SegmentWindow&, const SegmentWindow&) = default;
};

// Cuts [0, duration_s) into contiguous windows of `segment_length`.
// A trailing partial window is dropped.
inline std::vector<SegmentWindow> align_segments(double duration_s, double segment_length,
                                                 const std::string& movie_id = {}) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw InvalidArgument("duration must be positive, got " + std::to_string(duration_s));
  }
  if (!(segment_length > 0.0) || !std::isfinite(segment_length)) {
    throw InvalidArgument("segment length must be positive, got " + std::to_string(segment_length));
  }
  // The epsilon absorbs representation error in exact multiples (e.g. 0.3 / 0.1).
  const auto count = static_cast<std::size_t>(std::floor(duration_s / segment_length + 1e-9));
  std::vector<SegmentWindow> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({movie_id, i, static_cast<double>(i) * segment_length,
                   static_cast<double>(i + 1) * segment_length});
  }
  return out;
}

// Feature vectors of one modality for one movie.
//
// Storage is row-major [num_rows x frames_per_row x dim]. frames_per_row == 1 is
// the canonical pre-pooled form where row i is the vector of segment i.
class FeatureTable {
 public:
  FeatureTable() = default;

  FeatureTable(std::string movie_id, Modality modality, std::size_t dim, std::size_t num_rows,
               std::size_t frames_per_row = 1)
      : movie_id_(std::move(movie_id)),
        modality_(modality),
        dim_(dim),
        num_rows_(num_rows),
        frames_per_row_(frames_per_row),
        values_(num_rows * frames_per_row * dim, 0.0f) {
    if (dim == 0) throw InvalidArgument("feature dim must be positive");
    if (frames_per_row == 0) throw InvalidArgument("frames_per_row must be positive");
  }

  FeatureTable(std::string movie_id, Modality modality, std::size_t dim, std::vector<float> values,
               std::size_t frames_per_row = 1)
      : movie_id_(std::move(movie_id)),
        modality_(modality),
        dim_(dim),
        frames_per_row_(frames_per_row),
        values_(std::move(values)) {
    if (dim == 0) throw InvalidArgument("feature dim must be positive");
    if (frames_per_row == 0) throw InvalidArgument("frames_per_row must be positive");
    if (values_.size() % (dim * frames_per_row) != 0) {
      throw InvalidArgument("value count is not a multiple of frames_per_row * dim");
    }
    num_rows_ = values_.size() / (dim * frames_per_row);
  }

  const std::string& movie_id() const noexcept { return movie_id_; }
  Modality modality() const noexcept { return modality_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_rows() const noexcept { return num_rows_; }
  std::size_t frames_per_row() const noexcept { return frames_per_row_; }
  bool is_pooled() const noexcept { return frames_per_row_ == 1; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<float> values() noexcept { return values_; }

  // All frames of row i, [frames_per_row x dim].
  std::span<const float> frames(std::size_t i) const {
    const std::size_t stride = frames_per_row_ * dim_;
    return std::span<const float>(values_).subspan(i * stride, stride);
  }
  std::span<float> frames(std::size_t i) {
    const std::size_t stride = frames_per_row_ * dim_;
    return std::span<float>(values_).subspan(i * stride, stride);
  }

  // Segment vector of row i; only valid on pooled tables.
  std::span<const float> row(std::size_t i) const {
    if (!is_pooled()) throw InvalidArgument("row() requires a pooled table");
    return frames(i);
  }
  std::span<float> row(std::size_t i) {
    if (!is_pooled()) throw InvalidArgument("row() requires a pooled table");
    return frames(i);
  }

  // Index of the first row containing a NaN or Inf, or num_rows() if none.
  std::size_t first_non_finite_row() const noexcept {
    const std::size_t stride = frames_per_row_ * dim_;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) return i / stride;
    }
    return num_rows_;
  }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;

 private:
  std::string movie_id_;
  Modality modality_ = Modality::still;
  std::size_t dim_ = 0;
  std::size_t num_rows_ = 0;
  std::size_t frames_per_row_ = 1;
  std::vector<float> values_;
};

// ---------------------------------------------------------------------------
// Frame pooling

enum class PoolMode : std::uint8_t { max, mean };

namespace detail {
inline void check_frames(std::span<const float> frames, std::size_t dim) {
  if (dim == 0) throw InvalidArgument("pooling needs a positive dim");
  if (frames.empty()) throw InvalidArgument("pooling needs at least one frame");
  if (frames.size() % dim != 0) throw InvalidArgument("frame buffer is not a multiple of dim");
}
}  // namespace detail

// Element-wise maximum over the frames of a [num_frames x dim] row-major buffer.
inline std::vector<float> max_pool_frames(std::span<const float> frames, std::size_t dim) {
  detail::check_frames(frames, dim);
  std::vector<float> out(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(dim));
  for (std::size_t f = dim; f < frames.size(); f += dim) {
    for (std::size_t j = 0; j < dim; ++j) out[j] = std::max(out[j], frames[f + j]);
  }
  return out;
}

// Element-wise arithmetic mean, accumulated in double and summed in frame order.
inline std::vector<float> avg_pool_frames(std::span<const float> frames, std::size_t dim) {
  detail::check_frames(frames, dim);
  const std::size_t num_frames = frames.size() / dim;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t f = 0; f < frames.size(); f += dim) {
    for (std::size_t j = 0; j < dim; ++j) acc[j] += frames[f + j];
  }
  std::vector<float> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(acc[j] / static_cast<double>(num_frames));
  return out;
}

// Visual frame features are max-pooled; motion, sound and text are averaged.
constexpr PoolMode default_pool_mode(Modality m) noexcept {
  return (m == Modality::still || m == Modality::scene) ? PoolMode::max : PoolMode::mean;
}

// Collapses a frame-stacked table to one row per segment. Pooled tables are returned as-is.
inline FeatureTable pool_table(const FeatureTable& table, PoolMode mode) {
  if (table.is_pooled()) return table;
  FeatureTable out(table.movie_id(), table.modality(), table.dim(), table.num_rows(), 1);
  for (std::size_t i = 0; i < table.num_rows(); ++i) {
    auto pooled = mode == PoolMode::max ? max_pool_frames(table.frames(i), table.dim())
                                        : avg_pool_frames(table.frames(i), table.dim());
    std::copy(pooled.begin(), pooled.end(), out.row(i).begin());
  }
  return out;
}

inline FeatureTable pool_table(const FeatureTable& table) {
  return pool_table(table, default_pool_mode(table.modality()));
}

// ---------------------------------------------------------------------------
// Binary feature file
//
//   0   "AFFX"
//   4   u32 version (1)
//   8   u16 modality-name length, UTF-8 name
//       u16 movie-id length, UTF-8 id
//       u32 dim, u32 num_rows, u32 frames_per_row
//       num_rows * frames_per_row * dim float32, row-major
//
// All integers and floats little-endian.

inline constexpr std::string_view kFeatureMagic = "AFFX";
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline std::string encode_feature_table(const FeatureTable& table) {
  if (table.dim() == 0) throw InvalidArgument("cannot encode a table with dim 0");
  if (const auto bad = table.first_non_finite_row(); bad != table.num_rows()) {
    throw DataError("non-finite feature value in table " + table.movie_id() + "/" +
                        std::string(to_string(table.modality())),
                    bad);
  }
  if (table.num_rows() > 0xFFFFFFFFu || table.dim() > 0xFFFFFFFFu || table.frames_per_row() > 0xFFFFFFFFu) {
    throw InvalidArgument("table too large for the feature file format");
  }
  detail::ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u32(kFeatureFormatVersion);
  w.short_string(to_string(table.modality()), "modality name");
  w.short_string(table.movie_id(), "movie id");
  w.u32(static_cast<std::uint32_t>(table.dim()));
  w.u32(static_cast<std::uint32_t>(table.num_rows()));
  w.u32(static_cast<std::uint32_t>(table.frames_per_row()));
  for (float v : table.values()) w.f32(v);
  return w.take();
}

inline FeatureTable decode_feature_table(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kFeatureMagic) throw FormatError("bad magic, expected \"AFFX\"", 0);
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("version"); version != kFeatureFormatVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version), version_at);
  }
  const std::size_t name_at = r.offset();
  const std::string name = r.short_string("modality name");
  const auto modality = try_parse_modality(name);
  if (!modality) throw FormatError("unknown modality '" + name + "'", name_at);
  std::string movie = r.short_string("movie id");
  const std::size_t dim_at = r.offset();
  const std::uint32_t dim = r.u32("dim");
  if (dim == 0) throw FormatError("dim must be positive", dim_at);
  const std::uint32_t num_rows = r.u32("num_rows");
  const std::size_t fpr_at = r.offset();
  const std::uint32_t frames_per_row = r.u32("frames_per_row");
  if (frames_per_row == 0) throw FormatError("frames_per_row must be positive", fpr_at);

  const std::uint64_t count = std::uint64_t{num_rows} * frames_per_row * dim;
  if (count * 4 != r.remaining()) {
    if (count * 4 > r.remaining()) {
      throw FormatError("truncated payload: expected " + std::to_string(count * 4) + " bytes, found " +
                            std::to_string(r.remaining()),
                        bytes.size());
    }
    throw FormatError("trailing bytes after payload", r.offset() + count * 4);
  }
  std::vector<float> values(count);
  for (auto& v : values) v = r.f32("payload");
  FeatureTable table(std::move(movie), *modality, dim, std::move(values), frames_per_row);
  if (const auto bad = table.first_non_finite_row(); bad != table.num_rows()) {
    throw DataError("non-finite feature value", bad);
  }
  return table;
}

inline void write_feature_file(const FeatureTable& table, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_feature_table(table));
}

inline FeatureTable read_feature_file(const std::filesystem::path& path) {
  return decode_feature_table(detail::read_file_bytes(path));
}

}  // namespace affuse
