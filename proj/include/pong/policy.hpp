#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pong/errors.hpp"
#include "pong/rng.hpp"

namespace pong {

/// Neuron counts, input first and output last, e.g. {7680, 200, 2}.
using LayerSpec = std::vector<int>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using SparseInput = Eigen::SparseVector<Scalar>;

/// Smallest probability fed to the logarithm in the cross-entropy loss.
inline constexpr double kProbabilityFloor = 1e-12;

/// weights is (out x in); bias is (out).
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weights;
  VectorX<Scalar> bias;

  bool operator==(const DenseLayer& other) const {
    return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
           weights == other.weights && bias == other.bias;
  }
};

/// Rectifier hidden layers followed by a softmax output layer.
template <typename Scalar>
struct NetworkParams {
  LayerSpec layer_sizes;
  std::vector<DenseLayer<Scalar>> layers;
  std::uint64_t seed = 0;

  Eigen::Index input_size() const { return layer_sizes.front(); }
  Eigen::Index output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool operator==(const NetworkParams&) const = default;
};

/// Post-activation values of every non-input layer; the last entry is the
/// softmax output.
template <typename Scalar>
struct ActivationTrace {
  std::vector<VectorX<Scalar>> layers;

  const VectorX<Scalar>& probabilities() const { return layers.back(); }
};

inline void validate_layer_spec(const LayerSpec& spec) {
  if (spec.size() < 2) throw ArgumentError("layer spec needs an input and an output size");
  for (const int n : spec) {
    if (n <= 0) throw ArgumentError("layer sizes must be positive");
  }
  if (spec.back() < 2) throw ArgumentError("softmax output needs at least two actions");
}

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double>
NetworkParams<Scalar> init_network(const LayerSpec& spec, std::uint64_t seed) {
  validate_layer_spec(spec);
  NetworkParams<Scalar> params;
  params.layer_sizes = spec;
  params.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 1; l < spec.size(); ++l) {
    const int fan_in = spec[l - 1];
    const int fan_out = spec[l];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer<Scalar> layer;
    layer.weights.resize(fan_out, fan_in);
    // column-major fill order is part of the seeded contract
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    layer.bias = VectorX<Scalar>::Zero(fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

/// Numerically stable softmax (max-shifted).
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar shift = logits.maxCoeff();
  VectorX<Scalar> e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
Scalar cross_entropy(const VectorX<Scalar>& probabilities, const VectorX<Scalar>& label) {
  const auto clamped = probabilities.array().max(Scalar(kProbabilityFloor)).min(Scalar(1));
  return -(label.array() * clamped.log()).sum();
}

namespace detail {

template <typename Scalar>
void check_input_size(const NetworkParams<Scalar>& params, Eigen::Index size) {
  if (size != params.input_size()) {
    throw ArgumentError("input length " + std::to_string(size) + " does not match network input " +
                        std::to_string(params.input_size()));
  }
}

// W * x, exploiting sparsity of the difference image.
template <typename Scalar>
VectorX<Scalar> first_product(const MatrixX<Scalar>& w, const SparseInput<Scalar>& x) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(w.rows());
  for (typename SparseInput<Scalar>::InnerIterator it(x); it; ++it) {
    out.noalias() += w.col(it.index()) * it.value();
  }
  return out;
}

template <typename Scalar, typename Derived>
VectorX<Scalar> first_product(const MatrixX<Scalar>& w, const Eigen::MatrixBase<Derived>& x) {
  return w * x;
}

template <typename Scalar>
void add_outer(MatrixX<Scalar>& grad, const VectorX<Scalar>& delta, const SparseInput<Scalar>& x) {
  for (typename SparseInput<Scalar>::InnerIterator it(x); it; ++it) {
    grad.col(it.index()).noalias() += delta * it.value();
  }
}

template <typename Scalar, typename Derived>
void add_outer(MatrixX<Scalar>& grad, const VectorX<Scalar>& delta,
               const Eigen::MatrixBase<Derived>& x) {
  grad.noalias() += delta * x.transpose();
}

}  // namespace detail

/// Runs the network on one flattened input (dense or sparse). Pure.
template <typename Scalar, typename Input>
ActivationTrace<Scalar> forward(const NetworkParams<Scalar>& params, const Input& input) {
  detail::check_input_size(params, input.size());
  ActivationTrace<Scalar> trace;
  trace.layers.reserve(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    VectorX<Scalar> z = l == 0 ? detail::first_product(layer.weights, input)
                               : VectorX<Scalar>(layer.weights * trace.layers.back());
    z += layer.bias;
    if (l + 1 == params.layers.size()) {
      trace.layers.push_back(softmax(z));
    } else {
      trace.layers.push_back(z.cwiseMax(Scalar(0)));
    }
  }
  return trace;
}

/// Draws an index with probability p_i. Throws ArgumentError unless the
/// entries are non-negative and sum to 1 within 1e-6.
template <typename Derived>
int sample_action(const Eigen::MatrixBase<Derived>& probabilities, Rng& rng) {
  const double total = static_cast<double>(probabilities.sum());
  if (!std::isfinite(total) || std::abs(total - 1.0) > 1e-6 ||
      (probabilities.array() < 0).any()) {
    throw ArgumentError("sample_action: probabilities must be non-negative and sum to 1");
  }
  const double u = rng.uniform01();
  double cumulative = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = static_cast<double>(probabilities(i));
    if (p > 0.0) last_positive = static_cast<int>(i);
    cumulative += p;
    if (u < cumulative) return static_cast<int>(i);
  }
  return last_positive;
}

template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& values) {
  Eigen::Index index = 0;
  values.maxCoeff(&index);
  return static_cast<int>(index);
}

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;  // mean over the samples
  std::vector<DenseLayer<Scalar>> gradients;
};

template <typename Scalar>
std::vector<DenseLayer<Scalar>> zeros_like(const NetworkParams<Scalar>& params) {
  std::vector<DenseLayer<Scalar>> out;
  for (const auto& l : params.layers) {
    out.push_back({MatrixX<Scalar>::Zero(l.weights.rows(), l.weights.cols()),
                   VectorX<Scalar>::Zero(l.bias.size())});
  }
  return out;
}

/// Mean categorical cross-entropy over the samples and its gradient by
/// backpropagation. Labels may be soft and need not sum to one.
template <typename Scalar, typename Input>
LossGradient<Scalar> loss_and_gradient(const NetworkParams<Scalar>& params,
                                       std::span<const Input> inputs,
                                       std::span<const VectorX<Scalar>> labels) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw ArgumentError("loss_and_gradient: need equally many (non-zero) inputs and labels");
  }
  LossGradient<Scalar> out;
  out.gradients = zeros_like(params);
  const std::size_t depth = params.layers.size();
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const auto& label = labels[s];
    if (label.size() != params.output_size()) {
      throw ArgumentError("label length does not match network output");
    }
    const auto trace = forward(params, inputs[s]);
    out.loss += cross_entropy(trace.probabilities(), label);

    // d loss / d logits for softmax + cross-entropy
    VectorX<Scalar> delta = label.sum() * trace.probabilities() - label;
    for (std::size_t l = depth; l-- > 0;) {
      auto& grad = out.gradients[l];
      grad.bias += delta;
      if (l == 0) {
        detail::add_outer(grad.weights, delta, inputs[s]);
      } else {
        const auto& below = trace.layers[l - 1];
        grad.weights.noalias() += delta * below.transpose();
        VectorX<Scalar> back = params.layers[l].weights.transpose() * delta;
        delta = (below.array() > Scalar(0)).select(back.array(), Scalar(0)).matrix();
      }
    }
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(inputs.size());
  out.loss *= scale;
  for (auto& g : out.gradients) {
    g.weights *= scale;
    g.bias *= scale;
  }
  return out;
}

enum class OptimizerKind { SGD, RMSProp };

template <typename Scalar>
struct Optimizer {
  OptimizerKind kind = OptimizerKind::RMSProp;
  Scalar step_size = Scalar(1e-3);
  Scalar decay = Scalar(0.99);
  Scalar epsilon = Scalar(1e-8);
  std::vector<DenseLayer<Scalar>> cache;  // running mean of squared gradients

  void validate() const {
    if (!(step_size > 0)) throw ConfigError("optimizer step_size must be positive");
    if (kind == OptimizerKind::RMSProp && !(decay > 0 && decay < 1)) {
      throw ConfigError("RMSProp decay must lie in (0, 1)");
    }
  }

  void apply(NetworkParams<Scalar>& params, const std::vector<DenseLayer<Scalar>>& grads) {
    if (kind == OptimizerKind::SGD) {
      for (std::size_t l = 0; l < grads.size(); ++l) {
        params.layers[l].weights -= step_size * grads[l].weights;
        params.layers[l].bias -= step_size * grads[l].bias;
      }
      return;
    }
    if (cache.size() != grads.size()) cache = zeros_like(params);
    auto update = [this](auto& param, auto& acc, const auto& g) {
      acc.array() = decay * acc.array() + (Scalar(1) - decay) * g.array().square();
      param.array() -= step_size * g.array() / (acc.array().sqrt() + epsilon);
    };
    for (std::size_t l = 0; l < grads.size(); ++l) {
      update(params.layers[l].weights, cache[l].weights, grads[l].weights);
      update(params.layers[l].bias, cache[l].bias, grads[l].bias);
    }
  }
};

/// One pass over the samples. minibatch_size 0 means a single full-batch
/// update. Returns the mean loss measured before each update.
template <typename Scalar, typename Input>
Scalar fit_epoch(NetworkParams<Scalar>& params, std::span<const Input> inputs,
                 std::span<const VectorX<Scalar>> labels, Optimizer<Scalar>& optimizer,
                 std::size_t minibatch_size = 0) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw ArgumentError("fit_epoch: need equally many (non-zero) inputs and labels");
  }
  optimizer.validate();
  const std::size_t chunk = minibatch_size == 0 ? inputs.size() : minibatch_size;
  Scalar total = 0;
  for (std::size_t begin = 0; begin < inputs.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, inputs.size() - begin);
    auto result = loss_and_gradient(params, inputs.subspan(begin, n), labels.subspan(begin, n));
    total += result.loss * static_cast<Scalar>(n);
    optimizer.apply(params, result.gradients);
  }
  return total / static_cast<Scalar>(inputs.size());
}

template <typename Scalar, typename Input>
LossGradient<Scalar> loss_and_gradient(const NetworkParams<Scalar>& params,
                                       const std::vector<Input>& inputs,
                                       const std::vector<VectorX<Scalar>>& labels) {
  return loss_and_gradient(params, std::span<const Input>(inputs),
                           std::span<const VectorX<Scalar>>(labels));
}

template <typename Scalar, typename Input>
Scalar fit_epoch(NetworkParams<Scalar>& params, const std::vector<Input>& inputs,
                 const std::vector<VectorX<Scalar>>& labels, Optimizer<Scalar>& optimizer,
                 std::size_t minibatch_size = 0) {
  return fit_epoch(params, std::span<const Input>(inputs),
                   std::span<const VectorX<Scalar>>(labels), optimizer, minibatch_size);
}

using Network = NetworkParams<double>;
using Trace = ActivationTrace<double>;

/// Text (JSON) weights document; round-trips bit-exactly.
void save_weights(const Network& params, const std::string& path,
                  const std::string& provenance_json = {});
Network load_weights(const std::string& path);
std::string weights_document(const Network& params, const std::string& provenance_json = {});
Network parse_weights_document(const std::string& text);

}  // namespace pong
