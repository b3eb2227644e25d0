#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "affuse/error.hpp"

namespace affuse {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::relu;
};

// y = act(W x + b), W stored [out x in].
template <typename T>
struct DenseLayer {
  Matrix<T> weights;
  Vector<T> bias;
  Activation activation = Activation::identity;

  std::size_t in() const noexcept { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out() const noexcept { return static_cast<std::size_t>(weights.rows()); }

  bool operator==(const DenseLayer& o) const {
    return activation == o.activation && weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() &&
           bias.size() == o.bias.size() && weights == o.weights && bias == o.bias;
  }
};

template <typename T>
struct DenseGradient {
  Matrix<T> weights;
  Vector<T> bias;
};

template <typename T>
using GradientSet = std::vector<DenseGradient<T>>;

// ---------------------------------------------------------------------------
// Randomness

// SplitMix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept { return mix_seed(mix_seed(a) ^ b); }

// Portable draws: std::mt19937_64 is fully specified, the distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below needs n > 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::iter_swap(first + (i - 1), first + below(i));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// He-style uniform init: W ~ U(-a, a) with a = sqrt(6 / fan_in), so std(W) = sqrt(2 / fan_in).
// Biases start at zero.
template <typename T>
DenseLayer<T> init_params(const LayerShape& shape, std::uint64_t seed) {
  if (shape.in == 0 || shape.out == 0) throw InvalidArgument("layer dimensions must be positive");
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(shape.in));
  DenseLayer<T> layer;
  layer.activation = shape.activation;
  layer.weights.resize(static_cast<Eigen::Index>(shape.out), static_cast<Eigen::Index>(shape.in));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      layer.weights(r, c) = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
  layer.bias = Vector<T>::Zero(static_cast<Eigen::Index>(shape.out));
  return layer;
}

// ---------------------------------------------------------------------------
// Softmax and loss

inline constexpr double kProbabilityFloor = 1e-12;

// p_i = exp(z_i/T - m) / sum_j exp(z_j/T - m), m = max_j z_j/T.
inline std::vector<double> softmax_T(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax temperature must be positive");
  if (logits.empty()) throw InvalidArgument("softmax of an empty vector");
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw InvalidArgument("softmax logits must be finite");
    m = std::max(m, z / temperature);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double cross_entropy(std::span<const double> probs, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size()) {
    throw InvalidArgument("target class " + std::to_string(target) + " out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(target)], kProbabilityFloor));
}

// Lowest index among the maxima.
template <typename Range>
int argmax(const Range& values) {
  int best = 0;
  int i = 0;
  bool first = true;
  double best_v = 0.0;
  for (auto v : values) {
    if (first || static_cast<double>(v) > best_v) {
      best_v = static_cast<double>(v);
      best = i;
      first = false;
    }
    ++i;
  }
  return best;
}

// Mean temperature-softmax cross-entropy over the rows of `logits`. When `grad` is
// non-null it receives dLoss/dlogits = (softmax_T(z) - onehot) / (T * batch).
template <typename T>
double softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> targets, double temperature,
                             Matrix<T>* grad = nullptr) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax temperature must be positive");
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw InvalidArgument("logit rows and target count differ");
  }
  const Eigen::Index batch = logits.rows();
  const Eigen::Index k = logits.cols();
  if (grad) grad->resize(batch, k);
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= k) throw InvalidArgument("target class " + std::to_string(target) + " out of range");
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k; ++j) m = std::max(m, static_cast<double>(logits(i, j)) / temperature);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      row[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits(i, j)) / temperature - m);
      sum += row[static_cast<std::size_t>(j)];
    }
    for (double& v : row) v /= sum;
    total += -std::log(std::max(row[static_cast<std::size_t>(target)], kProbabilityFloor));
    if (grad) {
      const double scale = 1.0 / (temperature * static_cast<double>(batch));
      for (Eigen::Index j = 0; j < k; ++j) {
        const double onehot = j == target ? 1.0 : 0.0;
        (*grad)(i, j) = static_cast<T>((row[static_cast<std::size_t>(j)] - onehot) * scale);
      }
    }
  }
  return batch == 0 ? 0.0 : total / static_cast<double>(batch);
}

// ---------------------------------------------------------------------------
// Dense forward / backward on row-major batches [batch x features]

template <typename T>
void apply_activation(Activation a, Matrix<T>& z) {
  if (a == Activation::relu) z = z.cwiseMax(T(0));
}

// Returns the pre-activation Z = X W^T + b.
template <typename T>
Matrix<T> dense_preactivation(const DenseLayer<T>& layer, const Matrix<T>& x) {
  Matrix<T> z(x.rows(), layer.weights.rows());
  z.noalias() = x * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

// Given dL/dA for A = act(Z), accumulates parameter gradients and returns dL/dX.
template <typename T>
Matrix<T> dense_backward(const DenseLayer<T>& layer, const Matrix<T>& x, const Matrix<T>& z, Matrix<T> grad_out,
                         DenseGradient<T>& grad, bool need_input_grad = true) {
  if (layer.activation == Activation::relu) grad_out.array() *= (z.array() > T(0)).template cast<T>();
  grad.weights.noalias() = grad_out.transpose() * x;
  grad.bias = grad_out.colwise().sum().transpose();
  Matrix<T> grad_in;
  if (need_input_grad) grad_in.noalias() = grad_out * layer.weights;
  return grad_in;
}

// Activations of a sequential stack: inputs[i] feeds layer i, pre[i] is its pre-activation.
template <typename T>
struct Activations {
  std::vector<Matrix<T>> inputs;
  std::vector<Matrix<T>> pre;
  Matrix<T> output;
};

template <typename T>
Activations<T> forward(std::span<const DenseLayer<T>> layers, const Matrix<T>& input) {
  Activations<T> acts;
  Matrix<T> x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (static_cast<std::size_t>(x.cols()) != layers[i].in()) {
      throw InvalidArgument("layer " + std::to_string(i) + " expects " + std::to_string(layers[i].in()) +
                            " inputs, got " + std::to_string(x.cols()));
    }
    Matrix<T> z = dense_preactivation(layers[i], x);
    acts.inputs.push_back(std::move(x));
    x = z;
    apply_activation(layers[i].activation, x);
    acts.pre.push_back(std::move(z));
  }
  acts.output = std::move(x);
  return acts;
}

template <typename T>
struct BackwardResult {
  GradientSet<T> grads;
  double loss = 0.0;
};

// Exact gradients of the mean temperature-softmax cross-entropy of the stack output.
template <typename T>
BackwardResult<T> backward(std::span<const DenseLayer<T>> layers, const Activations<T>& acts,
                           std::span<const int> targets, double temperature) {
  if (acts.pre.size() != layers.size()) throw InvalidArgument("activations do not match the layer stack");
  BackwardResult<T> result;
  result.grads.resize(layers.size());
  Matrix<T> grad;
  result.loss = softmax_cross_entropy(acts.output, targets, temperature, &grad);
  for (std::size_t i = layers.size(); i-- > 0;) {
    grad = dense_backward(layers[i], acts.inputs[i], acts.pre[i], std::move(grad), result.grads[i], i > 0);
  }
  return result;
}

// ---------------------------------------------------------------------------
// SGD

template <typename T>
bool all_finite(const DenseGradient<T>& g) {
  return g.weights.allFinite() && g.bias.allFinite();
}

// p <- p - lr * (g + wd * p) on weights; biases skip the decay term.
template <typename T>
void sgd_update(DenseLayer<T>& layer, const DenseGradient<T>& grad, double learning_rate, double weight_decay,
                int epoch = 0, int batch = 0) {
  if (grad.weights.rows() != layer.weights.rows() || grad.weights.cols() != layer.weights.cols() ||
      grad.bias.size() != layer.bias.size()) {
    throw InvalidArgument("gradient shape does not match layer");
  }
  if (!all_finite(grad)) throw TrainingError("non-finite gradient", epoch, batch);
  const T lr = static_cast<T>(learning_rate);
  const T wd = static_cast<T>(weight_decay);
  layer.weights -= lr * (grad.weights + wd * layer.weights);
  layer.bias -= lr * grad.bias;
}

template <typename T>
void sgd_update(std::span<DenseLayer<T>> layers, const GradientSet<T>& grads, double learning_rate,
                double weight_decay, int epoch = 0, int batch = 0) {
  if (layers.size() != grads.size()) throw InvalidArgument("gradient set does not match layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!all_finite(grads[i])) throw TrainingError("non-finite gradient in layer " + std::to_string(i), epoch, batch);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) sgd_update(layers[i], grads[i], learning_rate, weight_decay, epoch, batch);
}

}  // namespace affuse
