#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affuse/error.hpp"

namespace affuse {

// Declaration order is the canonical concatenation order.
enum class Modality : std::uint8_t { still = 0, scene = 1, motion = 2, sound = 3, text = 4 };

inline constexpr std::size_t kNumModalities = 5;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::still, Modality::scene, Modality::motion, Modality::sound, Modality::text};

constexpr std::size_t index_of(Modality m) noexcept { return static_cast<std::size_t>(m); }

constexpr std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::still: return "still";
    case Modality::scene: return "scene";
    case Modality::motion: return "motion";
    case Modality::sound: return "sound";
    case Modality::text: return "text";
  }
  return "?";
}

inline std::optional<Modality> try_parse_modality(std::string_view name) noexcept {
  for (Modality m : kAllModalities) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

inline Modality parse_modality(std::string_view name) {
  if (auto m = try_parse_modality(name)) return *m;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

enum class TargetDimension : std::uint8_t { valence = 0, arousal = 1 };
enum class AnnotationKind : std::uint8_t { experienced = 0, intended = 1 };

constexpr std::string_view to_string(TargetDimension d) noexcept {
  return d == TargetDimension::valence ? "valence" : "arousal";
}
constexpr std::string_view to_string(AnnotationKind k) noexcept {
  return k == AnnotationKind::experienced ? "experienced" : "intended";
}

inline TargetDimension parse_target_dimension(std::string_view s) {
  if (s == "valence") return TargetDimension::valence;
  if (s == "arousal") return TargetDimension::arousal;
  throw ConfigError("unknown target dimension '" + std::string(s) + "'");
}

inline AnnotationKind parse_annotation_kind(std::string_view s) {
  if (s == "experienced") return AnnotationKind::experienced;
  if (s == "intended") return AnnotationKind::intended;
  throw ConfigError("unknown annotation kind '" + std::string(s) + "'");
}

// Fixed-size map keyed by modality; an empty optional means "absent".
template <typename T>
using ModalityMap = std::array<std::optional<T>, kNumModalities>;

// Non-empty set of modalities, always iterated in canonical order.
class ModalityCombo {
 public:
  ModalityCombo() = default;

  ModalityCombo(std::initializer_list<Modality> ms) {
    for (Modality m : ms) insert(m);
  }

  static ModalityCombo from_mask(std::uint8_t mask) {
    if (mask == 0 || mask >= (1u << kNumModalities)) {
      throw InvalidArgument("invalid modality mask " + std::to_string(mask));
    }
    ModalityCombo c;
    c.mask_ = mask;
    return c;
  }

  // Accepts '+'-joined tokens. Besides modality names, "visual" expands to
  // still+scene+motion and backbone aliases (resnet, places, i3d, soundnet, bert)
  // map to their modality. Case and surrounding whitespace are ignored.
  static ModalityCombo parse(std::string_view spec) {
    ModalityCombo c;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
      std::size_t end = spec.find('+', pos);
      if (end == std::string_view::npos) end = spec.size();
      std::string token;
      for (char ch : spec.substr(pos, end - pos)) {
        if (!std::isspace(static_cast<unsigned char>(ch))) {
          token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
      }
      if (token.empty()) throw ConfigError("empty modality token in combo '" + std::string(spec) + "'");
      if (token == "visual") {
        c.insert(Modality::still);
        c.insert(Modality::scene);
        c.insert(Modality::motion);
      } else if (token == "resnet") {
        c.insert(Modality::still);
      } else if (token == "places") {
        c.insert(Modality::scene);
      } else if (token == "i3d") {
        c.insert(Modality::motion);
      } else if (token == "soundnet") {
        c.insert(Modality::sound);
      } else if (token == "bert") {
        c.insert(Modality::text);
      } else {
        c.insert(parse_modality(token));
      }
      pos = end + 1;
    }
    return c;
  }

  void insert(Modality m) noexcept { mask_ |= static_cast<std::uint8_t>(1u << index_of(m)); }
  bool contains(Modality m) const noexcept { return (mask_ >> index_of(m)) & 1u; }
  bool empty() const noexcept { return mask_ == 0; }
  std::uint8_t mask() const noexcept { return mask_; }

  std::size_t size() const noexcept {
    std::size_t n = 0;
    for (Modality m : kAllModalities) n += contains(m) ? 1 : 0;
    return n;
  }

  std::vector<Modality> modalities() const {
    std::vector<Modality> out;
    for (Modality m : kAllModalities) {
      if (contains(m)) out.push_back(m);
    }
    return out;
  }

  // Canonical label, e.g. "visual+sound+text" or "still+sound".
  std::string label() const {
    std::string out;
    auto append = [&out](std::string_view token) {
      if (!out.empty()) out += '+';
      out += token;
    };
    const bool visual = contains(Modality::still) && contains(Modality::scene) && contains(Modality::motion);
    if (visual) append("visual");
    for (Modality m : kAllModalities) {
      const bool is_visual = m == Modality::still || m == Modality::scene || m == Modality::motion;
      if (contains(m) && !(visual && is_visual)) append(to_string(m));
    }
    return out;
  }

  friend bool operator==(const ModalityCombo&, const ModalityCombo&) = default;

 private:
  std::uint8_t mask_ = 0;
};

// Experiment rows of the ablation table, in table order.
inline std::vector<ModalityCombo> default_ablation_combos() {
  std::vector<ModalityCombo> out;
  for (std::string_view s : {"visual", "sound", "text", "visual+sound", "still+sound", "text+sound",
                             "text+visual", "text+still", "visual+sound+text"}) {
    out.push_back(ModalityCombo::parse(s));
  }
  return out;
}

}  // namespace affuse
