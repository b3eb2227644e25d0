#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "affuse/error.hpp"
#include "affuse/fusion.hpp"
#include "affuse/labels.hpp"
#include "affuse/modality.hpp"
#include "affuse/parallel.hpp"
#include "affuse/training.hpp"

namespace affuse {

// ---------------------------------------------------------------------------
// Metrics

namespace detail {
inline void check_metric_inputs(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("prediction and label counts differ (" + std::to_string(predictions.size()) + " vs " +
                          std::to_string(labels.size()) + ")");
  }
  if (predictions.empty()) throw InvalidArgument("metrics need at least one prediction");
}
}  // namespace detail

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  detail::check_metric_inputs(predictions, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Fraction of predictions at most one bin away from the label.
inline double accuracy_within_one(std::span<const int> predictions, std::span<const int> labels) {
  detail::check_metric_inputs(predictions, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += std::abs(predictions[i] - labels[i]) <= 1 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// counts[truth * k + predicted]
struct ConfusionMatrix {
  std::size_t num_classes = kNumClasses;
  std::vector<std::size_t> counts = std::vector<std::size_t>(kNumClasses * kNumClasses, 0);

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : num_classes(k), counts(k * k, 0) {}

  void add(int truth, int predicted) {
    if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= num_classes ||
        static_cast<std::size_t>(predicted) >= num_classes) {
      throw InvalidArgument("class index out of confusion-matrix range");
    }
    ++counts[static_cast<std::size_t>(truth) * num_classes + static_cast<std::size_t>(predicted)];
  }

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  std::size_t row_sum(std::size_t truth) const {
    std::size_t t = 0;
    for (std::size_t p = 0; p < num_classes; ++p) t += at(truth, p);
    return t;
  }

  std::size_t correct() const {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < num_classes; ++c) diag += at(c, c);
    return diag;
  }

  std::size_t within_one() const {
    std::size_t near = 0;
    for (std::size_t t = 0; t < num_classes; ++t) {
      for (std::size_t p = 0; p < num_classes; ++p) {
        if ((t > p ? t - p : p - t) <= 1) near += at(t, p);
      }
    }
    return near;
  }

  double accuracy() const { return static_cast<double>(correct()) / static_cast<double>(total()); }
  double accuracy_within_one() const { return static_cast<double>(within_one()) / static_cast<double>(total()); }
};

// ---------------------------------------------------------------------------
// Leave-one-movie-out cross-validation

struct EvalConfig {
  TrainConfig train;
  ModelShape shape;
};

struct FoldResult {
  std::string held_out_movie;
  TargetDimension target = TargetDimension::valence;
  ModalityCombo combo;
  double accuracy = 0.0;
  double accuracy_within_one = 0.0;
  std::size_t num_test_segments = 0;
  ConfusionMatrix confusion;
  bool failed = false;
  std::string error;
  TrainHistory history;
  std::vector<std::size_t> test_indices;  // into the evaluated segment list
  std::vector<int> predictions;           // parallel to test_indices
};

struct LooResult {
  std::vector<FoldResult> folds;
  double accuracy = 0.0;             // segment-weighted over successful folds
  double accuracy_within_one = 0.0;
  std::size_t num_tested = 0;

  bool complete() const {
    return std::none_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.failed; });
  }
};

// Movie ids in order of first appearance.
inline std::vector<std::string> movie_order(std::span<const LabeledSegment> segments) {
  std::vector<std::string> out;
  for (const auto& s : segments) {
    if (std::find(out.begin(), out.end(), s.window.movie_id) == out.end()) out.push_back(s.window.movie_id);
  }
  return out;
}

inline std::uint64_t fold_seed(std::uint64_t seed, const ModalityCombo& combo, TargetDimension target,
                               std::size_t fold) {
  return mix_seed(mix_seed(mix_seed(seed, combo.mask()), static_cast<std::uint64_t>(target)), fold);
}

namespace detail {

template <typename T>
FoldResult run_fold(std::span<const LabeledSegment> segments, const std::string& held_out,
                    const ModalityMap<std::size_t>& dims, const ModalityCombo& combo, TargetDimension target,
                    const EvalConfig& config, std::uint64_t seed) {
  FoldResult fold;
  fold.held_out_movie = held_out;
  fold.target = target;
  fold.combo = combo;
  fold.confusion = ConfusionMatrix(config.shape.num_classes);

  std::vector<const LabeledSegment*> pool;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].window.movie_id == held_out) {
      fold.test_indices.push_back(i);
    } else {
      pool.push_back(&segments[i]);
    }
  }
  const auto split = split_validation(std::span<const LabeledSegment* const>(pool), config.train.validation_fraction);
  std::vector<const LabeledSegment*> train_set, val_set, test_set;
  for (auto i : split.train) train_set.push_back(pool[i]);
  for (auto i : split.val) val_set.push_back(pool[i]);
  for (auto i : fold.test_indices) test_set.push_back(&segments[i]);

  TrainConfig train_config = config.train;
  train_config.seed = seed;
  auto model = build_model<T>(dims, combo, target, config.shape, mix_seed(seed, 0xF00D));
  const auto train_data = gather_data<T>(std::span<const LabeledSegment* const>(train_set), combo, target);
  const auto val_data = gather_data<T>(std::span<const LabeledSegment* const>(val_set), combo, target);
  const auto test_data = gather_data<T>(std::span<const LabeledSegment* const>(test_set), combo, target);

  fold.num_test_segments = test_set.size();
  try {
    auto trained = train_fold(train_data, val_data, std::move(model), train_config);
    fold.history = std::move(trained.history);
    const auto eval = evaluate_model(trained.model, test_data, train_config.temperature);
    fold.predictions = eval.predictions;
    for (std::size_t i = 0; i < test_set.size(); ++i) fold.confusion.add(test_data.targets[i], eval.predictions[i]);
    fold.accuracy = accuracy(eval.predictions, test_data.targets);
    fold.accuracy_within_one = accuracy_within_one(eval.predictions, test_data.targets);
  } catch (const TrainingError& ex) {
    fold.failed = true;
    fold.error = ex.what();
  }
  return fold;
}

}  // namespace detail

// One fold per movie: train on the others (minus a temporal validation tail), test
// on the held-out movie. Folds run on up to `jobs` threads; results keep movie order.
template <typename T = float>
LooResult leave_one_out(std::span<const LabeledSegment> segments, const ModalityMap<std::size_t>& dims,
                        const ModalityCombo& combo, TargetDimension target, const EvalConfig& config, int jobs = 1) {
  config.train.validate();
  const auto movies = movie_order(segments);
  if (movies.size() < 2) throw ConfigError("leave-one-out needs at least 2 movies");

  LooResult result;
  result.folds.resize(movies.size());
  detail::parallel_for(movies.size(), jobs, [&](std::size_t f) {
    result.folds[f] = detail::run_fold<T>(segments, movies[f], dims, combo, target, config,
                                          fold_seed(config.train.seed, combo, target, f));
  });

  std::size_t hits = 0, near = 0;
  for (const auto& fold : result.folds) {
    if (fold.failed) continue;
    result.num_tested += fold.num_test_segments;
    hits += fold.confusion.correct();
    near += fold.confusion.within_one();
  }
  if (result.num_tested > 0) {
    result.accuracy = static_cast<double>(hits) / static_cast<double>(result.num_tested);
    result.accuracy_within_one = static_cast<double>(near) / static_cast<double>(result.num_tested);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string label;
  ModalityCombo combo;
  std::optional<LooResult> arousal;
  std::optional<LooResult> valence;

  bool complete() const {
    return (!arousal || arousal->complete()) && (!valence || valence->complete());
  }
};

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct AblationReport {
  std::vector<AblationRow> rows;
  AnnotationKind annotation_kind = AnnotationKind::experienced;
  ConfigEcho config_echo;

  bool complete() const {
    return std::all_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.complete(); });
  }
};

inline ConfigEcho echo_eval_config(const EvalConfig& config) {
  const auto& t = config.train;
  return {
      {"proj_dim", std::to_string(config.shape.proj_dim)},
      {"hidden_dim", std::to_string(config.shape.hidden_dim)},
      {"num_classes", std::to_string(config.shape.num_classes)},
      {"seed", std::to_string(t.seed)},
      {"validation_fraction", fmt::format("{}", t.validation_fraction)},
      {"validation_split", "temporal tail per training movie"},
      {"learning_rate", fmt::format("{}", t.learning_rate)},
      {"weight_decay", fmt::format("{}", t.weight_decay)},
      {"temperature", fmt::format("{}", t.temperature)},
      {"epochs", std::to_string(t.epochs)},
      {"batch_size", std::to_string(t.batch_size)},
      {"patience", std::to_string(t.patience)},
      {"optimizer", "sgd (no momentum, constant lr, no decay on biases)"},
      {"early_stopping", "validation loss"},
      {"aggregate", "segment-weighted over folds"},
  };
}

template <typename T = float>
AblationReport ablation_run(std::span<const LabeledSegment> segments, const ModalityMap<std::size_t>& dims,
                            const std::vector<ModalityCombo>& combos, const std::vector<TargetDimension>& targets,
                            const EvalConfig& config, AnnotationKind kind, int jobs = 1) {
  for (const auto& combo : combos) {
    for (Modality m : combo.modalities()) {
      if (!dims[index_of(m)]) throw ConfigError("combo '" + combo.label() + "' needs missing modality '" +
                                                std::string(to_string(m)) + "'");
    }
  }
  AblationReport report;
  report.annotation_kind = kind;
  report.config_echo = echo_eval_config(config);
  report.config_echo.insert(report.config_echo.begin(), {"annotation_kind", std::string(to_string(kind))});
  for (const auto& combo : combos) {
    AblationRow row;
    row.label = combo.label();
    row.combo = combo;
    for (TargetDimension d : {TargetDimension::arousal, TargetDimension::valence}) {
      if (std::find(targets.begin(), targets.end(), d) == targets.end()) continue;
      auto loo = leave_one_out<T>(segments, dims, combo, d, config, jobs);
      (d == TargetDimension::arousal ? row.arousal : row.valence) = std::move(loo);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reference numbers reported for the original experiments (percentages).

struct ReferenceRow {
  std::string label;
  double arousal_acc;
  double arousal_acc1;
  double valence_acc;
  double valence_acc1;
};

inline std::vector<ReferenceRow> reference_rows(AnnotationKind kind) {
  if (kind == AnnotationKind::experienced) {
    return {
        {"FC (RGB frame + OF + Audio)", 53.32, 94.75, 43.10, 90.51},
        {"LSTM (RGB frame + OF + Audio)", 48.64, 95.28, 37.20, 89.22},
        {"Visual (Resnet + Places + I3D)", 42.23, 90.55, 41.71, 91.23},
        {"Sound (SoundNet)", 58.59, 95.11, 56.28, 97.20},
        {"Text (BERT)", 58.86, 95.13, 32.55, 82.62},
        {"Visual + Sound", 54.30, 94.20, 32.30, 82.90},
        {"Resnet + Sound", 58.59, 95.11, 36.43, 86.20},
        {"Text + Sound", 58.59, 95.11, 30.82, 83.17},
        {"Text + Visual", 54.22, 94.36, 30.40, 83.22},
        {"Text + Resnet", 58.22, 95.11, 36.32, 86.18},
        {"Visual + Sound + Text", 56.86, 94.65, 42.19, 91.46},
    };
  }
  return {
      {"FC (RGB frame + OF + Audio)", 31.20, 72.94, 30.33, 66.95},
      {"LSTM (RGB frame + OF + Audio)", 30.80, 71.69, 22.54, 57.63},
      {"Malandrakis et al.", 24.00, 57.00, 24.00, 64.00},
      {"Visual (Resnet + Places + I3D)", 42.67, 86.99, 49.20, 93.81},
      {"Sound (SoundNet)", 58.51, 95.10, 55.85, 96.21},
      {"Text (BERT)", 58.56, 95.10, 32.45, 83.99},
      {"Visual + Sound", 58.51, 95.10, 54.85, 97.45},
      {"Text + Sound", 58.51, 95.10, 41.79, 83.65},
      {"Text + Visual", 58.51, 94.94, 31.53, 84.21},
      {"Text + Resnet", 56.89, 94.79, 30.41, 83.70},
      {"Sound + Text + Resnet", 54.42, 94.07, 37.48, 87.23},
      {"Visual + Sound + Text", 54.45, 96.35, 32.48, 83.99},
  };
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { text_table, delimited };

inline constexpr std::array<std::string_view, 5> kReportColumns = {
    "Model", "Arousal Acc(%)", "Arousal Acc±1(%)", "Valence Acc(%)", "Valence Acc±1(%)"};

namespace detail {

inline std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

inline std::string pad(std::string_view s, std::size_t width, bool right_align) {
  const std::size_t w = display_width(s);
  const std::string fill(width > w ? width - w : 0, ' ');
  return right_align ? fill + std::string(s) : std::string(s) + fill;
}

inline std::string percent(double fraction) { return fmt::format("{:.2f}", 100.0 * fraction); }

inline std::array<std::string, 5> row_cells(const AblationRow& row) {
  auto cells = [](const std::optional<LooResult>& r) -> std::pair<std::string, std::string> {
    if (!r || r->num_tested == 0) return {"-", "-"};
    return {percent(r->accuracy), percent(r->accuracy_within_one)};
  };
  const auto [aa, aa1] = cells(row.arousal);
  const auto [va, va1] = cells(row.valence);
  return {row.label + (row.complete() ? "" : "*"), aa, aa1, va, va1};
}

}  // namespace detail

// Columns: Model | Arousal Acc(%) | Arousal Acc±1(%) | Valence Acc(%) | Valence Acc±1(%),
// percentages with two decimals. Rows with failed folds are starred and listed below.
inline std::string render_report(const AblationReport& report, ReportFormat format, bool include_reference = false) {
  std::vector<std::array<std::string, 5>> rows;
  for (const auto& row : report.rows) rows.push_back(detail::row_cells(row));
  std::vector<std::array<std::string, 5>> refs;
  if (include_reference) {
    for (const auto& r : reference_rows(report.annotation_kind)) {
      refs.push_back({"[reference] " + r.label, fmt::format("{:.2f}", r.arousal_acc), fmt::format("{:.2f}", r.arousal_acc1),
                      fmt::format("{:.2f}", r.valence_acc), fmt::format("{:.2f}", r.valence_acc1)});
    }
  }

  std::vector<std::string> notes;
  for (const auto& row : report.rows) {
    for (const auto* loo : {&row.arousal, &row.valence}) {
      if (!*loo) continue;
      for (const auto& fold : (*loo)->folds) {
        if (fold.failed) {
          notes.push_back(fmt::format("* {} / {}: fold '{}' failed: {}", row.label, to_string(fold.target),
                                      fold.held_out_movie, fold.error));
        }
      }
    }
  }

  std::string out;
  if (format == ReportFormat::delimited) {
    auto line = [&out](const std::array<std::string, 5>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += '\n';
    };
    std::array<std::string, 5> header;
    for (std::size_t i = 0; i < 5; ++i) header[i] = std::string(kReportColumns[i]);
    line(header);
    for (const auto& r : rows) line(r);
    for (const auto& r : refs) line(r);
    for (const auto& n : notes) out += "# " + n + '\n';
    return out;
  }

  std::array<std::size_t, 5> width{};
  for (std::size_t i = 0; i < 5; ++i) width[i] = detail::display_width(kReportColumns[i]);
  for (const auto* set : {&rows, &refs}) {
    for (const auto& r : *set) {
      for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], detail::display_width(r[i]));
    }
  }
  auto line = [&](const std::array<std::string, 5>& cells) {
    for (std::size_t i = 0; i < 5; ++i) {
      out += (i ? " | " : "") + detail::pad(cells[i], width[i], i > 0);
    }
    out += '\n';
  };
  auto rule = [&] {
    for (std::size_t i = 0; i < 5; ++i) out += (i ? "-+-" : "") + std::string(width[i], '-');
    out += '\n';
  };
  std::array<std::string, 5> header;
  for (std::size_t i = 0; i < 5; ++i) header[i] = std::string(kReportColumns[i]);
  line(header);
  rule();
  for (const auto& r : rows) line(r);
  if (!refs.empty()) {
    rule();
    for (const auto& r : refs) line(r);
  }
  for (const auto& n : notes) out += n + '\n';
  return out;
}

inline std::string render_config_echo(const AblationReport& report, std::string_view prefix = "# ") {
  std::string out;
  for (const auto& [k, v] : report.config_echo) out += fmt::format("{}{}={}\n", prefix, k, v);
  return out;
}

// ---------------------------------------------------------------------------
// JSON form (used by the `report` subcommand)

inline nlohmann::ordered_json loo_to_json(const LooResult& loo) {
  nlohmann::ordered_json j;
  j["accuracy"] = loo.accuracy;
  j["accuracy_within_one"] = loo.accuracy_within_one;
  j["num_tested"] = loo.num_tested;
  j["complete"] = loo.complete();
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : loo.folds) {
    nlohmann::ordered_json fj;
    fj["held_out_movie"] = f.held_out_movie;
    fj["num_test_segments"] = f.num_test_segments;
    fj["accuracy"] = f.accuracy;
    fj["accuracy_within_one"] = f.accuracy_within_one;
    fj["failed"] = f.failed;
    if (f.failed) fj["error"] = f.error;
    fj["best_epoch"] = f.history.best_epoch;
    fj["stopped_epoch"] = f.history.stopped_epoch;
    fj["confusion"] = f.confusion.counts;
    j["folds"].push_back(std::move(fj));
  }
  return j;
}

// Accepts nlohmann::json or ordered_json (the latter keeps the config echo order).
template <typename Json>
LooResult loo_from_json(const Json& j, const ModalityCombo& combo, TargetDimension target) {
  LooResult loo;
  loo.accuracy = j.at("accuracy").template get<double>();
  loo.accuracy_within_one = j.at("accuracy_within_one").template get<double>();
  loo.num_tested = j.at("num_tested").template get<std::size_t>();
  for (const auto& fj : j.at("folds")) {
    FoldResult f;
    f.held_out_movie = fj.at("held_out_movie").template get<std::string>();
    f.combo = combo;
    f.target = target;
    f.num_test_segments = fj.at("num_test_segments").template get<std::size_t>();
    f.accuracy = fj.at("accuracy").template get<double>();
    f.accuracy_within_one = fj.at("accuracy_within_one").template get<double>();
    f.failed = fj.at("failed").template get<bool>();
    f.error = fj.value("error", std::string{});
    f.history.best_epoch = fj.value("best_epoch", 0);
    f.history.stopped_epoch = fj.value("stopped_epoch", 0);
    f.confusion.counts = fj.at("confusion").template get<std::vector<std::size_t>>();
    f.confusion.num_classes = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(f.confusion.counts.size()))));
    loo.folds.push_back(std::move(f));
  }
  return loo;
}

inline nlohmann::ordered_json report_to_json(const AblationReport& report) {
  nlohmann::ordered_json j;
  j["annotation_kind"] = std::string(to_string(report.annotation_kind));
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config_echo) j["config"][k] = v;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json rj;
    rj["label"] = row.label;
    rj["combo_mask"] = row.combo.mask();
    if (row.arousal) rj["arousal"] = loo_to_json(*row.arousal);
    if (row.valence) rj["valence"] = loo_to_json(*row.valence);
    j["rows"].push_back(std::move(rj));
  }
  return j;
}

template <typename Json>
AblationReport report_from_json(const Json& j) {
  try {
    AblationReport report;
    report.annotation_kind = parse_annotation_kind(j.at("annotation_kind").template get<std::string>());
    for (const auto& [k, v] : j.at("config").items()) report.config_echo.emplace_back(k, v.template get<std::string>());
    for (const auto& rj : j.at("rows")) {
      AblationRow row;
      row.label = rj.at("label").template get<std::string>();
      row.combo = ModalityCombo::from_mask(rj.at("combo_mask").template get<std::uint8_t>());
      if (rj.contains("arousal")) row.arousal = loo_from_json(rj["arousal"], row.combo, TargetDimension::arousal);
      if (rj.contains("valence")) row.valence = loo_from_json(rj["valence"], row.combo, TargetDimension::valence);
      report.rows.push_back(std::move(row));
    }
    return report;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed report: ") + ex.what());
  }
}

}  // namespace affuse
