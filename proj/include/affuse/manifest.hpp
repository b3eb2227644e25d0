#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "affuse/error.hpp"
#include "affuse/feature_store.hpp"
#include "affuse/modality.hpp"

namespace affuse {

inline constexpr std::string_view kManifestFileName = "manifest.affx.json";
inline constexpr int kManifestFormatVersion = 1;

struct MovieEntry {
  std::string id;
  double duration_s = 0.0;
  std::size_t num_segments = 0;
};

struct ModalityEntry {
  Modality modality = Modality::still;
  std::size_t dim = 0;
  // movie id -> feature file path, relative to the dataset root unless absolute.
  std::map<std::string, std::string> files;
};

// Dataset index. Serialized as JSON:
//
//   {
//     "format_version": 1,
//     "segment_length_s": 5.0,
//     "annotations": "annotations.csv",
//     "movies": [{"id": "m01", "duration_s": 1800.0, "num_segments": 360}, ...],
//     "modalities": [{"name": "sound", "dim": 1024,
//                     "files": {"m01": "features/m01.sound.affx", ...}}, ...]
//   }
//
// "annotations" is optional.
struct Manifest {
  int format_version = kManifestFormatVersion;
  double segment_length_s = kDefaultSegmentLength;
  std::string annotations;
  std::vector<MovieEntry> movies;
  std::vector<ModalityEntry> modalities;

  const ModalityEntry* find(Modality m) const {
    auto it = std::find_if(modalities.begin(), modalities.end(),
                           [m](const ModalityEntry& e) { return e.modality == m; });
    return it == modalities.end() ? nullptr : &*it;
  }

  ModalityMap<std::size_t> dims() const {
    ModalityMap<std::size_t> out;
    for (const auto& e : modalities) out[index_of(e.modality)] = e.dim;
    return out;
  }
};

inline nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["segment_length_s"] = m.segment_length_s;
  if (!m.annotations.empty()) j["annotations"] = m.annotations;
  j["movies"] = nlohmann::ordered_json::array();
  for (const auto& mv : m.movies) {
    j["movies"].push_back({{"id", mv.id}, {"duration_s", mv.duration_s}, {"num_segments", mv.num_segments}});
  }
  j["modalities"] = nlohmann::ordered_json::array();
  for (const auto& e : m.modalities) {
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& [movie, path] : e.files) files[movie] = path;
    j["modalities"].push_back({{"name", std::string(to_string(e.modality))}, {"dim", e.dim}, {"files", files}});
  }
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    m.segment_length_s = j.value("segment_length_s", kDefaultSegmentLength);
    m.annotations = j.value("annotations", std::string{});
    for (const auto& mv : j.at("movies")) {
      m.movies.push_back({mv.at("id").get<std::string>(), mv.at("duration_s").get<double>(),
                          mv.at("num_segments").get<std::size_t>()});
    }
    for (const auto& e : j.at("modalities")) {
      ModalityEntry entry;
      entry.modality = parse_modality(e.at("name").get<std::string>());
      entry.dim = e.at("dim").get<std::size_t>();
      entry.files = e.at("files").get<std::map<std::string, std::string>>();
      m.modalities.push_back(std::move(entry));
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed manifest: ") + ex.what());
  }
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return manifest_from_json(j);
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest '" + path.string() + "'");
  out << manifest_to_json(m).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Validation

struct Finding {
  std::string movie;
  std::string modality;
  std::string expected;
  std::string found;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const noexcept { return findings.empty(); }

  std::string to_text() const {
    std::string out;
    for (const auto& f : findings) {
      out += fmt::format("{}: movie={} modality={} expected={} found={}\n", f.message,
                         f.movie.empty() ? "-" : f.movie, f.modality.empty() ? "-" : f.modality,
                         f.expected.empty() ? "-" : f.expected, f.found.empty() ? "-" : f.found);
    }
    return out;
  }
};

inline std::filesystem::path resolve_path(const std::filesystem::path& root, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : root / path;
}

// Checks every manifest invariant against the files under `root`. Problems with
// referenced files become findings; this never throws for bad data.
inline ValidationReport validate_manifest(const Manifest& m, const std::filesystem::path& root) {
  ValidationReport report;
  auto add = [&report](std::string movie, std::string modality, std::string expected, std::string found,
                       std::string message) {
    report.findings.push_back(
        {std::move(movie), std::move(modality), std::move(expected), std::move(found), std::move(message)});
  };

  if (m.format_version != kManifestFormatVersion) {
    add("", "", std::to_string(kManifestFormatVersion), std::to_string(m.format_version),
        "unsupported manifest format_version");
  }
  if (!(m.segment_length_s > 0.0)) {
    add("", "", "> 0", fmt::format("{}", m.segment_length_s), "invalid segment_length_s");
  }
  if (m.movies.empty()) add("", "", ">= 1 movie", "0", "manifest lists no movies");
  if (m.modalities.empty()) add("", "", ">= 1 modality", "0", "manifest lists no modalities");

  std::set<std::string> movie_ids;
  for (const auto& mv : m.movies) {
    if (!movie_ids.insert(mv.id).second) add(mv.id, "", "unique id", "duplicate", "duplicate movie id");
    if (m.segment_length_s > 0.0) {
      if (!(mv.duration_s > 0.0)) {
        add(mv.id, "", "> 0", fmt::format("{}", mv.duration_s), "invalid movie duration");
      } else {
        const auto expected = align_segments(mv.duration_s, m.segment_length_s).size();
        if (expected != mv.num_segments) {
          add(mv.id, "", std::to_string(expected), std::to_string(mv.num_segments),
              "num_segments disagrees with duration");
        }
      }
    }
  }

  std::set<Modality> seen;
  for (const auto& e : m.modalities) {
    const std::string mod(to_string(e.modality));
    if (!seen.insert(e.modality).second) add("", mod, "unique modality", "duplicate", "duplicate modality entry");
    if (e.dim == 0) add("", mod, "> 0", "0", "invalid modality dim");

    std::vector<std::string> missing;
    for (const auto& mv : m.movies) {
      if (!e.files.contains(mv.id)) missing.push_back(mv.id);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += (list.empty() ? "" : ",") + id;
      add(list, mod, std::to_string(m.movies.size()) + " movies",
          std::to_string(m.movies.size() - missing.size()) + " movies", "modality set mismatch");
    }
    for (const auto& [movie, _] : e.files) {
      if (!movie_ids.contains(movie)) add(movie, mod, "listed movie", "unknown movie", "file for unlisted movie");
    }

    for (const auto& mv : m.movies) {
      auto it = e.files.find(mv.id);
      if (it == e.files.end()) continue;
      const auto path = resolve_path(root, it->second);
      FeatureTable table;
      try {
        table = read_feature_file(path);
      } catch (const Error& ex) {
        add(mv.id, mod, "readable feature file", path.string(), ex.what());
        continue;
      }
      if (table.modality() != e.modality) {
        add(mv.id, mod, mod, std::string(to_string(table.modality())), "feature file modality mismatch");
      }
      if (table.movie_id() != mv.id) add(mv.id, mod, mv.id, table.movie_id(), "feature file movie id mismatch");
      if (table.dim() != e.dim) {
        add(mv.id, mod, std::to_string(e.dim), std::to_string(table.dim()), "feature dim mismatch");
      }
      if (table.num_rows() != mv.num_segments) {
        add(mv.id, mod, std::to_string(mv.num_segments), std::to_string(table.num_rows()),
            "segment count mismatch");
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Loaded dataset

struct Dataset {
  std::filesystem::path root;
  Manifest manifest;
  // movie id -> pooled tables keyed by modality
  std::map<std::string, ModalityMap<FeatureTable>> tables;

  const FeatureTable& table(const std::string& movie, Modality m) const {
    auto it = tables.find(movie);
    if (it == tables.end() || !it->second[index_of(m)]) {
      throw ConfigError("no " + std::string(to_string(m)) + " features for movie '" + movie + "'");
    }
    return *it->second[index_of(m)];
  }
};

// Validates then loads every table, pooling frame-stacked ones.
inline Dataset load_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / kManifestFileName;
  if (!std::filesystem::exists(manifest_path)) {
    throw ConfigError("no " + std::string(kManifestFileName) + " under '" + root.string() + "'");
  }
  Dataset ds{root, load_manifest(manifest_path), {}};
  if (auto report = validate_manifest(ds.manifest, root); !report.ok()) {
    throw ConfigError("dataset failed validation:\n" + report.to_text());
  }
  for (const auto& e : ds.manifest.modalities) {
    for (const auto& mv : ds.manifest.movies) {
      ds.tables[mv.id][index_of(e.modality)] = pool_table(read_feature_file(resolve_path(root, e.files.at(mv.id))));
    }
  }
  return ds;
}

}  // namespace affuse
