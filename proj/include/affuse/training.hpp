#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "affuse/error.hpp"
#include "affuse/fusion.hpp"
#include "affuse/labels.hpp"
#include "affuse/neural.hpp"

namespace affuse {

struct TrainConfig {
  double learning_rate = 0.005;
  double weight_decay = 0.005;
  double temperature = 2.0;
  int epochs = 50;
  int batch_size = 128;
  int patience = 25;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("learning rate and weight decay must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (epochs <= 0 || batch_size <= 0 || patience <= 0) throw ConfigError("epochs, batch size and patience must be positive");
    if (patience > epochs) throw ConfigError("patience must not exceed epochs");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) throw ConfigError("validation fraction must be in (0, 1)");
  }
};

// Shuffled mini-batches of [0, n), keyed by (seed, epoch). The final batch may be short.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, std::uint64_t seed,
                                                          std::uint64_t epoch) {
  if (batch_size <= 0) throw InvalidArgument("batch size must be positive");
  if (n == 0) throw InvalidArgument("cannot batch an empty dataset");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
  }
  return batches;
}

struct ValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Temporal tail split: the last round(fraction * n) segments of each movie (at least
// one, at most n - 1) go to validation. Returned indices refer to `segments` and keep
// its order.
template <typename Seg>
ValidationSplit split_validation(std::span<const Seg> segments, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("validation fraction must be in (0, 1)");
  auto window_of = [](const Seg& s) -> const SegmentWindow& {
    if constexpr (std::is_pointer_v<Seg>) {
      return s->window;
    } else {
      return s.window;
    }
  };
  std::map<std::string, std::vector<std::size_t>> per_movie;
  for (std::size_t i = 0; i < segments.size(); ++i) per_movie[window_of(segments[i]).movie_id].push_back(i);

  std::vector<bool> is_val(segments.size(), false);
  for (auto& [movie, idx] : per_movie) {
    if (idx.size() < 2) throw ConfigError("movie '" + movie + "' has fewer than 2 segments; cannot split validation");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return window_of(segments[a]).index < window_of(segments[b]).index;
    });
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    for (std::size_t j = idx.size() - k; j < idx.size(); ++j) is_val[idx[j]] = true;
  }
  ValidationSplit split;
  for (std::size_t i = 0; i < segments.size(); ++i) (is_val[i] ? split.val : split.train).push_back(i);
  return split;
}

// Patience-based early stopping on a loss that should decrease. Keeps a copy of
// the state from the best (strictly lowest loss) epoch.
template <typename State>
class EarlyStopping {
 public:
  EarlyStopping(int patience, int max_epochs) : patience_(patience), max_epochs_(max_epochs) {
    if (patience <= 0 || max_epochs <= 0) throw InvalidArgument("patience and max_epochs must be positive");
  }

  // Records epoch `epoch` (1-based). Returns true when training should stop.
  bool observe(int epoch, double loss, const State& state) {
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      best_state_ = state;
    }
    last_epoch_ = epoch;
    return epoch >= max_epochs_ || (best_epoch_ > 0 && epoch - best_epoch_ >= patience_);
  }

  int best_epoch() const noexcept { return best_epoch_; }
  int last_epoch() const noexcept { return last_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  const std::optional<State>& best_state() const noexcept { return best_state_; }

 private:
  int patience_;
  int max_epochs_;
  int best_epoch_ = 0;
  int last_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::optional<State> best_state_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

template <typename T>
struct TrainResult {
  FusionModel<T> model;
  TrainHistory history;
};

// Mini-batch SGD on `train` with early stopping on `val` loss. Returns the
// parameters of the best validation epoch.
template <typename T>
TrainResult<T> train_fold(const FusionData<T>& train, const FusionData<T>& val, FusionModel<T> model,
                          const TrainConfig& config) {
  config.validate();
  if (train.size() == 0) throw ConfigError("empty training set");
  if (val.size() == 0) throw ConfigError("empty validation set");

  EarlyStopping<FusionModel<T>> stopper(config.patience, config.epochs);
  TrainHistory history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(train.size(), config.batch_size, config.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = select_rows(train, batches[b]);
      const std::span<const Matrix<T>> inputs(batch.inputs);
      const auto cache = fuse_forward(model, inputs);
      auto result = fuse_backward(model, inputs, cache, batch.targets, config.temperature);
      if (!std::isfinite(result.loss)) throw TrainingError("non-finite training loss", epoch, static_cast<int>(b));
      apply_sgd(model, result.grads, config.learning_rate, config.weight_decay, epoch, static_cast<int>(b));
      loss_sum += result.loss * static_cast<double>(batches[b].size());
    }
    const EvalSummary eval = evaluate_model(model, val, config.temperature);
    if (!std::isfinite(eval.loss)) throw TrainingError("non-finite validation loss", epoch, -1);
    history.epochs.push_back({epoch, loss_sum / static_cast<double>(train.size()), eval.loss, eval.accuracy});
    if (stopper.observe(epoch, eval.loss, model)) break;
  }
  history.best_epoch = stopper.best_epoch();
  history.stopped_epoch = stopper.last_epoch();
  return {*stopper.best_state(), std::move(history)};
}

inline void write_history(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : history.epochs) {
    out << fmt::format("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy);
  }
}

}  // namespace affuse
