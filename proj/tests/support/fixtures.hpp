#pragma once

// In-memory labeled segments for training and evaluation tests.

#include <string>
#include <vector>

#include <fmt/format.h>

#include "affuse/labels.hpp"
#include "affuse/neural.hpp"

namespace affuse::testing {

// `movies` x `per_movie` segments with random classes. Sound encodes the valence
// class (x = sep * e_class + noise), text encodes arousal, still is pure noise.
inline std::vector<LabeledSegment> cluster_segments(std::size_t movies, std::size_t per_movie, std::size_t dim,
                                                    double separation, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSegment> out;
  for (std::size_t mv = 0; mv < movies; ++mv) {
    for (std::size_t s = 0; s < per_movie; ++s) {
      LabeledSegment seg;
      seg.window = {fmt::format("m{}", mv), s, 5.0 * static_cast<double>(s), 5.0 * static_cast<double>(s + 1)};
      seg.valence_class = static_cast<int>(rng.below(kNumClasses));
      seg.arousal_class = static_cast<int>(rng.below(kNumClasses));
      auto draw = [&](int cls) {
        std::vector<float> x(dim);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        if (cls >= 0) x[static_cast<std::size_t>(cls)] += static_cast<float>(separation);
        return x;
      };
      seg.features[index_of(Modality::still)] = draw(-1);
      seg.features[index_of(Modality::sound)] = draw(seg.valence_class);
      seg.features[index_of(Modality::text)] = draw(seg.arousal_class);
      out.push_back(std::move(seg));
    }
  }
  return out;
}

inline ModalityMap<std::size_t> cluster_dims(std::size_t dim) {
  ModalityMap<std::size_t> d;
  d[index_of(Modality::still)] = dim;
  d[index_of(Modality::sound)] = dim;
  d[index_of(Modality::text)] = dim;
  return d;
}

}  // namespace affuse::testing
