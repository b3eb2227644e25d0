// Acceptance checks. Prints one PASS/FAIL line per criterion with the measured
// numbers; exits non-zero if any criterion fails. Every input is generated here.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "affuse/checkpoint.hpp"
#include "affuse/cli.hpp"
#include "affuse/feature_store.hpp"
#include "affuse/labels.hpp"
#include "affuse/savgol.hpp"
#include "affuse/synthetic.hpp"
#include "affuse/training.hpp"
#include "gradient_check.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace affuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

// Gradient oracle --------------------------------------------------------------

// Relative error is taken against max(|analytic|, |numeric|, floor). The floor
// keeps coordinates whose true gradient is ~0 from dividing truncation noise by
// nothing.
constexpr double kGradFloor = 1e-7;

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(20240611);
  double worst = 0.0;
  std::size_t params = 0;
  for (int i = 0; i < 100; ++i) {
    const auto c = testing::random_gradient_case(rng, 1e-2);
    const auto r = testing::check_gradients(c, 1e-4, kGradFloor);
    worst = std::max(worst, r.max_relative_error);
    params += r.num_params;
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 60.0,
          fmt::format("100 models, {} parameters, max rel err {:.3g} (h=1e-4, floor {:g}), {:.2f}s", params, worst,
                      kGradFloor, t)};
}

// Softmax ----------------------------------------------------------------------

Outcome softmax_properties() {
  Rng rng(7);
  double worst_sum = 0.0;
  bool nonneg = true;
  std::size_t argmax_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 2 + rng.below(15);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 4.0));
    std::vector<double> z(k);
    for (auto& v : z) v = rng.uniform(-scale, scale);
    if (i % 10 == 0) z[rng.below(k)] = (rng.uniform() < 0.5 ? -1e4 : 1e4);
    const int ref = argmax(z);
    for (double t : {0.5, 1.0, 2.0, 10.0}) {
      const auto p = softmax_T(z, t);
      double s = 0.0;
      for (double v : p) {
        s += v;
        nonneg = nonneg && v >= 0.0 && v <= 1.0;
      }
      worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
      if (argmax(p) != ref) ++argmax_mismatch;
    }
  }
  return {worst_sum <= 1e-6 && nonneg && argmax_mismatch == 0,
          fmt::format("10000 vectors x 4 temperatures, max |sum-1| {:.3g}, argmax mismatches {}", worst_sum,
                      argmax_mismatch)};
}

// Savitzky-Golay ---------------------------------------------------------------

Outcome savgol_oracle() {
  Rng rng(11);
  double worst_fit = 0.0, worst_poly = 0.0;
  const std::size_t windows[] = {5, 11, 51};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t window = windows[i % 3];
    const std::size_t order = 1 + static_cast<std::size_t>((i / 3) % 3);
    const std::size_t n = window + rng.below(150);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    const auto got = savgol_filter(x, {window, order});
    const auto want = oracle::windowed_polyfit(x, window, order);
    for (std::size_t j = 0; j < n; ++j) worst_fit = std::max(worst_fit, std::fabs(got[j] - want[j]));

    // Polynomial of degree `order` with O(1) values over the track.
    std::vector<double> coef(order + 1);
    for (auto& c : coef) c = rng.uniform(-1.0, 1.0);
    std::vector<double> poly(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double u = static_cast<double>(j) / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t k = order + 1; k-- > 0;) v = v * u + coef[k];
      poly[j] = v;
    }
    const auto smoothed = savgol_filter(poly, {window, order});
    const std::size_t h = (window - 1) / 2;
    for (std::size_t j = h; j + h < n; ++j) worst_poly = std::max(worst_poly, std::fabs(smoothed[j] - poly[j]));
  }
  return {worst_fit <= 1e-8 && worst_poly <= 1e-10,
          fmt::format("1000 signals, max |filter - lstsq| {:.3g}, max interior poly error {:.3g}", worst_fit,
                      worst_poly)};
}

// Quantizer --------------------------------------------------------------------

Outcome quantizer_properties() {
  const QuantizerConfig q;
  bool examples = quantize(0.0, q) == 3 && quantize(-1.0, q) == 0 && quantize(1.0, q) == 6 && quantize(0.9, q) == 6;
  // Bin k is [-1 + k w, -1 + (k+1) w), the last one closed.
  const double w = q.bin_width();
  for (int k = 0; k < 7; ++k) examples = examples && quantize(-1.0 + (k + 0.5) * w, q) == k;
  Rng rng(5);
  bool monotone = true, in_range = true, dominance = true;
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    const int qa = quantize(a, q), qb = quantize(b, q);
    in_range = in_range && qa >= 0 && qa < 7;
    if (qa >= 0 && qa < 7) ++hits[static_cast<std::size_t>(qa)];
    if ((a < b && qa > qb) || (b < a && qb > qa)) monotone = false;
    // Random prediction/label batches: acc±1 >= acc.
    std::vector<int> p(8), t(8);
    for (std::size_t j = 0; j < 8; ++j) {
      p[j] = quantize(rng.uniform(-1.0, 1.0), q);
      t[j] = quantize(rng.uniform(-1.0, 1.0), q);
    }
    dominance = dominance && accuracy_within_one(p, t) >= accuracy(p, t);
  }
  const bool partition = std::all_of(hits.begin(), hits.end(), [](int h) { return h > 0; });
  return {examples && monotone && in_range && dominance && partition,
          fmt::format("examples {}, monotone {}, covers 7 bins {}, acc±1>=acc on 10000 draws {}", examples, monotone,
                      partition, dominance)};
}

// Synthetic end-to-end -----------------------------------------------------------

struct SyntheticRun {
  testing::TempDir dir{"acceptance_e2e"};
  std::optional<AblationReport> report;
  double seconds = 0.0;
  int exit_code = -1;
  std::string errors;
};

cli::RunConfig e2e_config(const std::filesystem::path& data, const std::filesystem::path& out) {
  cli::RunConfig run;
  run.dataset = data;
  run.output = out;
  run.combos = {ModalityCombo{Modality::still},
                ModalityCombo{Modality::sound},
                ModalityCombo{Modality::text},
                ModalityCombo{Modality::still, Modality::sound},
                ModalityCombo{Modality::still, Modality::text},
                ModalityCombo{Modality::still, Modality::sound, Modality::text}};
  run.jobs = 1;
  return run;
}

SyntheticRun& synthetic_run() {
  static SyntheticRun run;
  static bool done = false;
  if (!done) {
    done = true;
    SyntheticSpec spec;  // 3 movies x 600 segments; still/sound/text
    generate_synthetic_dataset(spec, run.dir / "data");
    std::ostringstream out, err;
    const auto t0 = Clock::now();
    auto outcome = cli::run_ablate(e2e_config(run.dir / "data", run.dir / "out"), out, err);
    run.seconds = seconds_since(t0);
    run.exit_code = outcome.exit_code;
    run.report = std::move(outcome.report);
    run.errors = err.str();
  }
  return run;
}

Outcome synthetic_end_to_end() {
  auto& run = synthetic_run();
  if (run.exit_code != 0 || !run.report) return {false, fmt::format("ablate exited {}: {}", run.exit_code, run.errors)};
  bool ok = run.seconds < 300.0;
  std::string detail;
  for (const auto& row : run.report->rows) {
    for (auto [target, result, informative] :
         {std::tuple{"valence", &row.valence, Modality::sound}, std::tuple{"arousal", &row.arousal, Modality::text}}) {
      if (!result->has_value()) {
        ok = false;
        continue;
      }
      const double acc = (*result)->accuracy;
      const bool has_signal = row.combo.contains(informative);
      const bool noise_only = row.combo == ModalityCombo{Modality::still};
      if (has_signal) ok = ok && acc >= 0.90;
      if (noise_only) ok = ok && std::fabs(acc - 1.0 / 7.0) <= 0.06;
      detail += fmt::format("{}/{} {:.1f}% ", row.label, target, 100.0 * acc);
    }
  }
  detail += fmt::format("({:.1f}s single-threaded)", run.seconds);
  return {ok, detail};
}

// LOO accounting -------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome loo_accounting() {
  auto& run = synthetic_run();
  if (!run.report) return {false, "no report from the end-to-end run"};
  const std::size_t total = 3 * 600;
  bool ok = true;
  for (const auto& row : run.report->rows) {
    for (const auto* result : {&row.valence, &row.arousal}) {
      if (!result->has_value()) continue;
      const auto& loo = **result;
      std::vector<int> seen(total, 0);
      std::vector<std::string> held;
      for (const auto& f : loo.folds) {
        held.push_back(f.held_out_movie);
        for (auto i : f.test_indices) {
          if (i < total) ++seen[i];
        }
      }
      std::sort(held.begin(), held.end());
      ok = ok && held == std::vector<std::string>{"movie01", "movie02", "movie03"};
      ok = ok && loo.num_tested == total && std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
    }
  }
  // Same seed, fresh process state: every report file byte-identical.
  std::ostringstream out, err;
  auto cfg = e2e_config(run.dir / "data", run.dir / "again");
  cfg.combos = {ModalityCombo{Modality::sound}, ModalityCombo{Modality::still, Modality::text}};
  auto first_cfg = cfg;
  first_cfg.output = run.dir / "first";
  const int a = cli::cmd_ablate(first_cfg, out, err);
  const int b = cli::cmd_ablate(cfg, out, err);
  bool identical = a == 0 && b == 0;
  for (const char* f : {"report.txt", "report.csv", "report.json", "folds.csv"}) {
    identical = identical && slurp(first_cfg.output / f) == slurp(cfg.output / f) && !slurp(cfg.output / f).empty();
  }
  return {ok && identical,
          fmt::format("3 folds per combo/target, every one of {} segments tested once: {}; repeated reports "
                      "byte-identical: {}",
                      total, ok, identical)};
}

// Early stopping --------------------------------------------------------------------

Outcome early_stopping() {
  // Parameter snapshots come from real SGD steps so "restores exactly" compares real models.
  ModalityMap<std::size_t> dims;
  dims[index_of(Modality::sound)] = 6;
  auto model = build_model<float>(dims, ModalityCombo{Modality::sound}, TargetDimension::valence, {4, 5, 7}, 3);
  Matrix<float> x = Matrix<float>::Random(16, 6);
  std::vector<int> t(16);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<int>(i % 7);
  std::vector<FusionModel<float>> snapshots;
  std::vector<Matrix<float>> inputs = {x};
  for (int e = 1; e <= 100; ++e) {
    const auto cache = fuse_forward(model, std::span<const Matrix<float>>(inputs));
    const auto g = fuse_backward(model, std::span<const Matrix<float>>(inputs), cache, std::span<const int>(t), 2.0);
    apply_sgd(model, g.grads, 0.05, 0.005);
    snapshots.push_back(model);
  }
  bool ok = true;
  int bad = 0;
  for (int best = 1; best <= 50; ++best) {
    EarlyStopping<FusionModel<float>> stop(25, 50);
    int last = 0;
    for (int e = 1; e <= 100; ++e) {
      const double loss = e <= best ? 10.0 - 0.1 * e : 10.0 - 0.1 * best + 0.001 * e;
      last = e;
      if (stop.observe(e, loss, snapshots[static_cast<std::size_t>(e - 1)])) break;
    }
    const bool good = last == std::min(50, best + 25) && stop.best_epoch() == best &&
                      *stop.best_state() == snapshots[static_cast<std::size_t>(best - 1)];
    if (!good) ++bad;
  }
  ok = bad == 0;

  // train_fold: the returned model reproduces the best epoch's validation loss exactly.
  SyntheticSpec spec;
  spec.num_movies = 2;
  spec.segments_per_movie = 120;
  testing::TempDir dir("acceptance_es");
  generate_synthetic_dataset(spec, dir.path());
  const auto ds = load_dataset(dir.path());
  const auto labels = label_segments(index_tracks(read_annotations(dir / ds.manifest.annotations)),
                                     ds.manifest.movies, ds.manifest.segment_length_s, LabelPipelineConfig{});
  const auto segs = attach_features(labels, ds);
  const ModalityCombo c{Modality::still};
  const auto split = split_validation(std::span<const LabeledSegment>(segs), 0.1);
  const auto all = gather_data<float>(std::span<const LabeledSegment>(segs), c, TargetDimension::valence);
  const auto val = select_rows(all, split.val);
  TrainConfig cfg;
  const auto init = build_model<float>(ds.manifest.dims(), c, TargetDimension::valence, {16, 16, 7}, 4);
  const auto r = train_fold(select_rows(all, split.train), val, init, cfg);
  const int b = r.history.best_epoch;
  const auto stopped = static_cast<int>(r.history.epochs.size());
  const double restored = evaluate_model(r.model, val, cfg.temperature).loss;
  const double recorded = r.history.epochs[static_cast<std::size_t>(b - 1)].val_loss;
  const bool fold_ok = stopped == std::min(50, b + 25) && restored == recorded;
  return {ok && fold_ok, fmt::format("50 synthetic histories ok: {}; noise-only fold best epoch {}, stopped at {}, "
                                     "restored val loss {} vs recorded {}",
                                     ok, b, stopped, restored, recorded)};
}

// Format round-trip -----------------------------------------------------------------------

Outcome format_round_trip() {
  Rng rng(13);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto mod = kAllModalities[rng.below(kNumModalities)];
    const std::size_t dim = 1 + rng.below(32), fpr = 1 + rng.below(4), rows = rng.below(20);
    std::vector<float> v(dim * fpr * rows);
    for (auto& x : v) {
      // Random finite bit patterns, including subnormals and signed zeros.
      std::uint32_t bits;
      do {
        bits = static_cast<std::uint32_t>(rng.below(1ull << 32));
      } while (((bits >> 23) & 0xFF) == 0xFF);
      x = std::bit_cast<float>(bits);
    }
    const FeatureTable table(fmt::format("movie{}", i), mod, dim, std::move(v), fpr);
    const auto bytes = encode_feature_table(table);
    const auto back = decode_feature_table(bytes);
    if (encode_feature_table(back) != bytes || back.movie_id() != table.movie_id() || back.dim() != dim ||
        back.frames_per_row() != fpr || back.num_rows() != rows) {
      ++mismatches;
    }
  }
  // Corrupted headers are rejected with the offending offset.
  const FeatureTable sample("m", Modality::sound, 3, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto good = encode_feature_table(sample);
  auto offset_of = [](std::string bytes) -> std::optional<std::uint64_t> {
    try {
      decode_feature_table(bytes);
    } catch (const FormatError& e) {
      return e.offset();
    }
    return std::nullopt;
  };
  auto with = [&](std::size_t at, char c) {
    auto b = good;
    b[at] = c;
    return b;
  };
  const auto magic = offset_of(with(0, 'X'));
  const auto version = offset_of(with(4, 9));
  const auto truncated = offset_of(good.substr(0, good.size() - 2));
  const auto trailing = offset_of(good + "x");
  const bool rejected = magic == 0u && version == 4u && truncated.has_value() && trailing == good.size();
  return {mismatches == 0 && rejected,
          fmt::format("1000 random tables, {} mismatches; bad magic at {}, bad version at {}, truncation at {}, "
                      "trailing byte at {}",
                      mismatches, magic ? std::to_string(*magic) : "-", version ? std::to_string(*version) : "-",
                      truncated ? std::to_string(*truncated) : "-", trailing ? std::to_string(*trailing) : "-")};
}

}  // namespace

int main() {
  report("gradient oracle", gradient_oracle);
  report("softmax simplex and temperature invariance", softmax_properties);
  report("savitzky-golay least-squares oracle", savgol_oracle);
  report("quantizer partition and metric dominance", quantizer_properties);
  report("synthetic end-to-end ablation", synthetic_end_to_end);
  report("leave-one-out accounting and determinism", loo_accounting);
  report("early stopping and best-state restore", early_stopping);
  report("feature format round-trip and corruption", format_round_trip);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
