#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "affuse/checkpoint.hpp"
#include "affuse/evaluation.hpp"
#include "affuse/labels.hpp"
#include "affuse/manifest.hpp"
#include "affuse/training.hpp"

// Subcommand implementations behind tools/affuse. Each returns the process exit
// status: 0 success, 1 data/validation/fold failure, 2 usage or unreadable input.
namespace affuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path annotations;  // empty: take it from the manifest
  std::filesystem::path labels;       // empty: preprocess on the fly
  std::filesystem::path output;
  LabelPipelineConfig pipeline;
  EvalConfig eval;
  std::vector<ModalityCombo> combos = default_ablation_combos();
  std::vector<TargetDimension> targets = {TargetDimension::arousal, TargetDimension::valence};
  std::optional<std::string> holdout;  // `train` only
  int jobs = 1;
  bool with_reference = false;
  ReportFormat format = ReportFormat::text_table;
};

inline ConfigEcho echo_pipeline(const LabelPipelineConfig& p, double segment_length) {
  return {
      {"annotation_kind", std::string(to_string(p.kind))},
      {"pipeline_order", "smooth>rescale>segment_mean>quantize"},
      {"smoother", "savitzky-golay, mirror edges"},
      {"smoother_window", std::to_string(p.smoother.window)},
      {"smoother_polyorder", std::to_string(p.smoother.polyorder)},
      {"quantizer_bins", std::to_string(p.quantizer.num_bins)},
      {"quantizer_range", fmt::format("[{},{}]", p.quantizer.range_lo, p.quantizer.range_hi)},
      {"segment_length_s", fmt::format("{}", segment_length)},
  };
}

// "# key=value" lines at the top of a labeled-segment file.
inline ConfigEcho read_label_echo(const std::filesystem::path& path) {
  std::ifstream in(path);
  ConfigEcho echo;
  std::string line;
  while (std::getline(in, line) && !line.empty() && line.front() == '#') {
    const auto body = line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1);
    const auto eq = body.find('=');
    if (eq != std::string::npos) echo.emplace_back(body.substr(0, eq), body.substr(eq + 1));
  }
  return echo;
}

// ---------------------------------------------------------------------------

inline int cmd_validate(const std::filesystem::path& root, std::ostream& out, std::ostream& err) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    err << "error: dataset root '" << root.string() << "' is not a readable directory\n";
    return kExitUsage;
  }
  const auto manifest_path = root / kManifestFileName;
  if (!std::filesystem::exists(manifest_path, ec)) {
    err << "error: no " << kManifestFileName << " under '" << root.string() << "'\n";
    return kExitUsage;
  }
  Manifest manifest;
  try {
    manifest = load_manifest(manifest_path);
  } catch (const Error& ex) {
    out << "finding: " << ex.what() << '\n';
    return kExitFailure;
  }
  const auto report = validate_manifest(manifest, root);
  if (report.ok()) {
    out << fmt::format("ok: {} movies, {} modalities, 0 findings\n", manifest.movies.size(), manifest.modalities.size());
    return kExitOk;
  }
  for (const auto& f : report.findings) {
    out << fmt::format("finding: {} (movie={} modality={} expected={} found={})\n", f.message,
                       f.movie.empty() ? "-" : f.movie, f.modality.empty() ? "-" : f.modality,
                       f.expected.empty() ? "-" : f.expected, f.found.empty() ? "-" : f.found);
  }
  out << report.findings.size() << " finding(s)\n";
  return kExitFailure;
}

namespace detail {

// Missing dataset roots are usage errors (exit 2), not data failures.
inline void require_manifest(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw InvalidArgument("dataset root '" + root.string() + "' is not a readable directory");
  }
  if (!std::filesystem::exists(root / kManifestFileName, ec)) {
    throw InvalidArgument("no " + std::string(kManifestFileName) + " under '" + root.string() + "'");
  }
}

inline std::filesystem::path annotation_path(const RunConfig& config, const Manifest& manifest) {
  if (!config.annotations.empty()) return config.annotations;
  if (manifest.annotations.empty()) throw ConfigError("no annotation file given and none listed in the manifest");
  return resolve_path(config.dataset, manifest.annotations);
}

inline std::vector<SegmentLabel> compute_labels(const RunConfig& config, const Manifest& manifest) {
  const auto tracks = index_tracks(read_annotations(annotation_path(config, manifest)));
  return label_segments(tracks, manifest.movies, manifest.segment_length_s, config.pipeline);
}

// Labels from --labels when given (checked against the requested annotation kind),
// otherwise from the annotation tracks.
inline std::vector<SegmentLabel> obtain_labels(const RunConfig& config, const Manifest& manifest) {
  if (config.labels.empty()) return compute_labels(config, manifest);
  for (const auto& [k, v] : read_label_echo(config.labels)) {
    if (k == "annotation_kind" && v != to_string(config.pipeline.kind)) {
      throw ConfigError(fmt::format("label file '{}' holds {} labels but {} were requested", config.labels.string(), v,
                                    to_string(config.pipeline.kind)));
    }
  }
  return read_labels(config.labels, manifest.segment_length_s);
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace detail

// Writes the labeled-segment file to config.output.
inline int cmd_preprocess(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require_manifest(config.dataset);
    const auto manifest = load_manifest(config.dataset / kManifestFileName);
    const auto labels = detail::compute_labels(config, manifest);
    if (config.output.has_parent_path()) std::filesystem::create_directories(config.output.parent_path());
    std::ofstream file(config.output, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot write '" + config.output.string() + "'");
    write_labels(file, labels, echo_pipeline(config.pipeline, manifest.segment_length_s));
    out << fmt::format("wrote {} labeled segments to {}\n", labels.size(), config.output.string());
    return kExitOk;
  });
}

// Trains one model (first combo, first target) on every movie except --holdout and
// writes model.affm plus history.csv into config.output.
inline int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (config.combos.size() != 1 || config.targets.size() != 1) {
      throw InvalidArgument("train needs exactly one --combos entry and one --target dimension");
    }
    const ModalityCombo combo = config.combos.front();
    const TargetDimension target = config.targets.front();
    detail::require_manifest(config.dataset);
    const Dataset dataset = load_dataset(config.dataset);
    const auto segments = attach_features(detail::obtain_labels(config, dataset.manifest), dataset);

    std::vector<const LabeledSegment*> pool;
    for (const auto& s : segments) {
      if (!config.holdout || s.window.movie_id != *config.holdout) pool.push_back(&s);
    }
    if (config.holdout && pool.size() == segments.size()) {
      throw ConfigError("holdout movie '" + *config.holdout + "' is not in the dataset");
    }
    const std::span<const LabeledSegment* const> pool_span(pool);
    const auto split = split_validation(pool_span, config.eval.train.validation_fraction);
    std::vector<const LabeledSegment*> train_set, val_set;
    for (auto i : split.train) train_set.push_back(pool[i]);
    for (auto i : split.val) val_set.push_back(pool[i]);

    auto model = build_model<float>(dataset.manifest.dims(), combo, target, config.eval.shape,
                                    mix_seed(config.eval.train.seed, 0xF00D));
    auto result = train_fold(gather_data<float>(std::span<const LabeledSegment* const>(train_set), combo, target),
                             gather_data<float>(std::span<const LabeledSegment* const>(val_set), combo, target),
                             std::move(model), config.eval.train);

    std::filesystem::create_directories(config.output);
    std::string echo;
    ConfigEcho items = echo_eval_config(config.eval);
    items.emplace_back("combo", combo.label());
    items.emplace_back("target", std::string(to_string(target)));
    items.emplace_back("holdout", config.holdout.value_or("none"));
    for (const auto& [k, v] : items) echo += k + "=" + v + "\n";
    save_checkpoint(result.model, config.output / "model.affm", echo);
    std::ostringstream hist;
    write_history(hist, result.history);
    detail::write_text(config.output / "history.csv", hist.str());
    out << fmt::format("trained {} / {}: best epoch {}, stopped at {}, val loss {:.6f}, val acc {:.4f}\n",
                       combo.label(), to_string(target), result.history.best_epoch, result.history.stopped_epoch,
                       result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)].val_loss,
                       result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)].val_accuracy);
    return kExitOk;
  });
}

inline std::string folds_csv(const AblationReport& report) {
  std::string out = "combo,target,held_out_movie,num_test_segments,accuracy,accuracy_within_one,failed,best_epoch,stopped_epoch\n";
  for (const auto& row : report.rows) {
    for (const auto* loo : {&row.arousal, &row.valence}) {
      if (!*loo) continue;
      for (const auto& f : (*loo)->folds) {
        out += fmt::format("{},{},{},{},{},{},{},{},{}\n", row.label, to_string(f.target), f.held_out_movie,
                           f.num_test_segments, f.accuracy, f.accuracy_within_one, f.failed ? 1 : 0,
                           f.history.best_epoch, f.history.stopped_epoch);
      }
    }
  }
  return out;
}

struct AblateOutcome {
  int exit_code = kExitOk;
  std::optional<AblationReport> report;
};

// Leave-one-out ablation over config.combos; writes report.txt, report.csv,
// report.json and folds.csv into config.output and prints the table.
inline AblateOutcome run_ablate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  AblateOutcome outcome;
  outcome.exit_code = detail::guarded(err, [&] {
    detail::require_manifest(config.dataset);
    const Dataset dataset = load_dataset(config.dataset);
    const auto segments = attach_features(detail::obtain_labels(config, dataset.manifest), dataset);
    auto report = ablation_run<float>(segments, dataset.manifest.dims(), config.combos, config.targets, config.eval,
                                      config.pipeline.kind, config.jobs);
    ConfigEcho echo = echo_pipeline(config.pipeline, dataset.manifest.segment_length_s);
    if (!config.labels.empty()) {
      echo = read_label_echo(config.labels);
      echo.emplace_back("labels", "from file");
    }
    for (auto& item : echo) {
      if (item.first == "annotation_kind") continue;
      report.config_echo.push_back(std::move(item));
    }

    std::filesystem::create_directories(config.output);
    const std::string table = render_report(report, ReportFormat::text_table, config.with_reference);
    detail::write_text(config.output / "report.txt", render_config_echo(report) + table);
    detail::write_text(config.output / "report.csv",
                       render_config_echo(report) + render_report(report, ReportFormat::delimited, config.with_reference));
    detail::write_text(config.output / "report.json", report_to_json(report).dump(2) + "\n");
    detail::write_text(config.output / "folds.csv", folds_csv(report));
    out << table;
    const bool complete = report.complete();
    outcome.report = std::move(report);
    if (!complete) {
      err << "error: one or more folds failed; affected rows are starred\n";
      return kExitFailure;
    }
    return kExitOk;
  });
  return outcome;
}

inline int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return run_ablate(config, out, err).exit_code;
}

// Re-renders a report.json written by `ablate`.
inline int cmd_report(const std::filesystem::path& input, ReportFormat format, bool with_reference, std::ostream& out,
                      std::ostream& err) {
  return detail::guarded(err, [&] {
    std::ifstream in(input);
    if (!in) throw InvalidArgument("cannot open report '" + input.string() + "'");
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("report is not valid JSON: ") + ex.what());
    }
    const auto report = report_from_json(j);
    out << render_report(report, format, with_reference);
    return report.complete() ? kExitOk : kExitFailure;
  });
}

}  // namespace affuse::cli
