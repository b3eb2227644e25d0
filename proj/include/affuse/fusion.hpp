#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affuse/error.hpp"
#include "affuse/labels.hpp"
#include "affuse/modality.hpp"
#include "affuse/neural.hpp"

namespace affuse {

struct ModelShape {
  std::size_t proj_dim = 128;
  std::size_t hidden_dim = 256;
  std::size_t num_classes = kNumClasses;
};

// Late-fusion classifier:
//
//   logits = fusion2(relu(fusion1(concat_m relu(projection_m(x_m)))))
//
// with one projection per modality of `combo`, concatenated in canonical order.
template <typename T>
struct FusionModel {
  ModalityCombo combo;
  TargetDimension target = TargetDimension::valence;
  std::vector<DenseLayer<T>> projections;  // parallel to combo.modalities()
  DenseLayer<T> fusion1;
  DenseLayer<T> fusion2;

  std::size_t num_classes() const noexcept { return fusion2.out(); }
  std::size_t num_layers() const noexcept { return projections.size() + 2; }

  // Flat layer order: projections..., fusion1, fusion2. Gradient sets follow it.
  DenseLayer<T>& layer(std::size_t i) {
    if (i < projections.size()) return projections[i];
    return i == projections.size() ? fusion1 : fusion2;
  }
  const DenseLayer<T>& layer(std::size_t i) const {
    if (i < projections.size()) return projections[i];
    return i == projections.size() ? fusion1 : fusion2;
  }

  bool operator==(const FusionModel& o) const {
    return combo == o.combo && target == o.target && projections == o.projections && fusion1 == o.fusion1 &&
           fusion2 == o.fusion2;
  }
};

// Input dims come from `dims` (see Manifest::dims()). Each layer draws from its own sub-seed.
template <typename T>
FusionModel<T> build_model(const ModalityMap<std::size_t>& dims, const ModalityCombo& combo, TargetDimension target,
                           const ModelShape& shape, std::uint64_t seed) {
  if (combo.empty()) throw ConfigError("modality combination is empty");
  if (shape.proj_dim == 0 || shape.hidden_dim == 0 || shape.num_classes < 2) {
    throw ConfigError("model widths must be positive and num_classes >= 2");
  }
  FusionModel<T> model;
  model.combo = combo;
  model.target = target;
  std::uint64_t layer_index = 0;
  for (Modality m : combo.modalities()) {
    if (!dims[index_of(m)]) {
      throw ConfigError("modality '" + std::string(to_string(m)) + "' is not present in the dataset");
    }
    model.projections.push_back(init_params<T>({*dims[index_of(m)], shape.proj_dim, Activation::relu},
                                               mix_seed(seed, layer_index++)));
  }
  model.fusion1 = init_params<T>({combo.size() * shape.proj_dim, shape.hidden_dim, Activation::relu},
                                 mix_seed(seed, layer_index++));
  model.fusion2 = init_params<T>({shape.hidden_dim, shape.num_classes, Activation::identity},
                                 mix_seed(seed, layer_index++));
  return model;
}

// ---------------------------------------------------------------------------
// Batched data

// Dense copy of a segment set for one (combo, target): one [n x dim] matrix per
// combo modality plus the class targets.
template <typename T>
struct FusionData {
  std::vector<Matrix<T>> inputs;
  std::vector<int> targets;

  std::size_t size() const noexcept { return targets.size(); }
};

template <typename T>
FusionData<T> gather_data(std::span<const LabeledSegment* const> segments, const ModalityCombo& combo,
                          TargetDimension target) {
  FusionData<T> data;
  const auto mods = combo.modalities();
  const auto n = static_cast<Eigen::Index>(segments.size());
  data.inputs.resize(mods.size());
  data.targets.resize(segments.size());
  for (std::size_t k = 0; k < mods.size(); ++k) {
    const std::size_t mi = index_of(mods[k]);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& feat = segments[i]->features[mi];
      if (!feat) {
        throw DataError("segment " + segments[i]->window.movie_id + "#" + std::to_string(segments[i]->window.index) +
                        " lacks modality '" + std::string(to_string(mods[k])) + "'");
      }
      if (i == 0) data.inputs[k].resize(n, static_cast<Eigen::Index>(feat->size()));
      if (static_cast<Eigen::Index>(feat->size()) != data.inputs[k].cols()) {
        throw DataError("inconsistent '" + std::string(to_string(mods[k])) + "' feature dims");
      }
      for (std::size_t j = 0; j < feat->size(); ++j) {
        data.inputs[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<T>((*feat)[j]);
      }
    }
  }
  for (std::size_t i = 0; i < segments.size(); ++i) data.targets[i] = segments[i]->class_for(target);
  return data;
}

template <typename T>
FusionData<T> gather_data(std::span<const LabeledSegment> segments, const ModalityCombo& combo,
                          TargetDimension target) {
  std::vector<const LabeledSegment*> ptrs;
  ptrs.reserve(segments.size());
  for (const auto& s : segments) ptrs.push_back(&s);
  return gather_data<T>(std::span<const LabeledSegment* const>(ptrs), combo, target);
}

// Rows `indices` of `data`, in that order.
template <typename T>
FusionData<T> select_rows(const FusionData<T>& data, std::span<const std::size_t> indices) {
  FusionData<T> out;
  out.inputs.reserve(data.inputs.size());
  for (const auto& m : data.inputs) {
    Matrix<T> sub(static_cast<Eigen::Index>(indices.size()), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(indices[i]));
    out.inputs.push_back(std::move(sub));
  }
  out.targets.reserve(indices.size());
  for (std::size_t i : indices) out.targets.push_back(data.targets[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct FusionCache {
  std::vector<Matrix<T>> proj_pre;
  Matrix<T> concat;  // post-ReLU projections side by side
  Matrix<T> hidden_pre;
  Matrix<T> hidden;
  Matrix<T> logits;
};

template <typename T>
FusionCache<T> fuse_forward(const FusionModel<T>& model, std::span<const Matrix<T>> inputs) {
  if (inputs.size() != model.projections.size()) {
    throw InvalidArgument("model expects " + std::to_string(model.projections.size()) + " modality inputs, got " +
                          std::to_string(inputs.size()));
  }
  const auto mods = model.combo.modalities();
  FusionCache<T> cache;
  const Eigen::Index batch = inputs.empty() ? 0 : inputs[0].rows();
  Eigen::Index width = 0;
  for (const auto& p : model.projections) width += static_cast<Eigen::Index>(p.out());
  cache.concat.resize(batch, width);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& proj = model.projections[k];
    if (static_cast<std::size_t>(inputs[k].cols()) != proj.in() || inputs[k].rows() != batch) {
      throw InvalidArgument("projection layer for '" + std::string(to_string(mods[k])) + "' expects " +
                            std::to_string(proj.in()) + " inputs, got " + std::to_string(inputs[k].cols()));
    }
    cache.proj_pre.push_back(dense_preactivation(proj, inputs[k]));
    Matrix<T> a = cache.proj_pre.back();
    apply_activation(proj.activation, a);
    cache.concat.middleCols(col, a.cols()) = a;
    col += a.cols();
  }
  if (static_cast<std::size_t>(width) != model.fusion1.in()) {
    throw InvalidArgument("fusion1 expects " + std::to_string(model.fusion1.in()) + " inputs, got " +
                          std::to_string(width));
  }
  cache.hidden_pre = dense_preactivation(model.fusion1, cache.concat);
  cache.hidden = cache.hidden_pre;
  apply_activation(model.fusion1.activation, cache.hidden);
  if (model.fusion2.in() != static_cast<std::size_t>(cache.hidden.cols())) {
    throw InvalidArgument("fusion2 expects " + std::to_string(model.fusion2.in()) + " inputs, got " +
                          std::to_string(cache.hidden.cols()));
  }
  cache.logits = dense_preactivation(model.fusion2, cache.hidden);
  apply_activation(model.fusion2.activation, cache.logits);
  return cache;
}

// Exact gradients of the mean temperature-softmax cross-entropy, in FusionModel::layer order.
template <typename T>
BackwardResult<T> fuse_backward(const FusionModel<T>& model, std::span<const Matrix<T>> inputs,
                                const FusionCache<T>& cache, std::span<const int> targets, double temperature) {
  if (model.fusion2.activation != Activation::identity) {
    throw InvalidArgument("classification head must have identity activation");
  }
  BackwardResult<T> result;
  result.grads.resize(model.num_layers());
  Matrix<T> grad;
  result.loss = softmax_cross_entropy(cache.logits, targets, temperature, &grad);
  const std::size_t np = model.projections.size();
  grad = dense_backward(model.fusion2, cache.hidden, cache.logits, std::move(grad), result.grads[np + 1]);
  grad = dense_backward(model.fusion1, cache.concat, cache.hidden_pre, std::move(grad), result.grads[np]);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < np; ++k) {
    const auto width = static_cast<Eigen::Index>(model.projections[k].out());
    Matrix<T> slice = grad.middleCols(col, width);
    dense_backward(model.projections[k], inputs[k], cache.proj_pre[k], std::move(slice), result.grads[k], false);
    col += width;
  }
  return result;
}

template <typename T>
void apply_sgd(FusionModel<T>& model, const GradientSet<T>& grads, double learning_rate, double weight_decay,
               int epoch = 0, int batch = 0) {
  if (grads.size() != model.num_layers()) throw InvalidArgument("gradient set does not match model");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!all_finite(grads[i])) throw TrainingError("non-finite gradient in layer " + std::to_string(i), epoch, batch);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    sgd_update(model.layer(i), grads[i], learning_rate, weight_decay, epoch, batch);
  }
}

// Logits for one segment.
template <typename T>
std::vector<double> fuse_forward(const FusionModel<T>& model, const LabeledSegment& segment) {
  std::vector<Matrix<T>> inputs;
  for (Modality m : model.combo.modalities()) {
    const auto& feat = segment.features[index_of(m)];
    if (!feat) throw DataError("segment lacks modality '" + std::string(to_string(m)) + "'");
    Matrix<T> x(1, static_cast<Eigen::Index>(feat->size()));
    for (std::size_t j = 0; j < feat->size(); ++j) x(0, static_cast<Eigen::Index>(j)) = static_cast<T>((*feat)[j]);
    inputs.push_back(std::move(x));
  }
  const auto cache = fuse_forward(model, std::span<const Matrix<T>>(inputs));
  std::vector<double> out(static_cast<std::size_t>(cache.logits.cols()));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<double>(cache.logits(0, static_cast<Eigen::Index>(j)));
  return out;
}

// Argmax of the logits; ties go to the lowest class.
template <typename T>
int predict(const FusionModel<T>& model, const LabeledSegment& segment) {
  return argmax(fuse_forward(model, segment));
}

struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

// Mean loss, accuracy and per-row predictions with frozen parameters.
template <typename T>
EvalSummary evaluate_model(const FusionModel<T>& model, const FusionData<T>& data, double temperature,
                           std::size_t chunk = 512) {
  EvalSummary s;
  const std::size_t n = data.size();
  if (n == 0) return s;
  s.predictions.reserve(n);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const auto part = select_rows(data, idx);
    const auto cache = fuse_forward(model, std::span<const Matrix<T>>(part.inputs));
    loss_sum += softmax_cross_entropy(cache.logits, part.targets, temperature) * static_cast<double>(end - start);
    for (Eigen::Index r = 0; r < cache.logits.rows(); ++r) {
      const int p = argmax(std::span<const T>(cache.logits.row(r).data(), static_cast<std::size_t>(cache.logits.cols())));
      s.predictions.push_back(p);
      if (p == part.targets[static_cast<std::size_t>(r)]) ++correct;
    }
  }
  s.loss = loss_sum / static_cast<double>(n);
  s.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return s;
}

}  // namespace affuse
