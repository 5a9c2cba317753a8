#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "oto/tensor.hpp"

namespace oto {

using ArrayId = std::size_t;

enum class ActivationKind { Identity, ReLU, LeakyReLU, PReLU, GELU };

// Every kind satisfies a(0) == 0 exactly. PReLU carries a fixed slope; it is
// not a trainable parameter.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double slope = 0.0;

  static Activation identity() { return {ActivationKind::Identity, 0.0}; }
  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double slope = 0.01) { return {ActivationKind::LeakyReLU, slope}; }
  static Activation prelu(double slope = 0.25) { return {ActivationKind::PReLU, slope}; }
  static Activation gelu() { return {ActivationKind::GELU, 0.0}; }

  bool operator==(const Activation&) const = default;
};

std::string to_string(ActivationKind kind);
Activation parse_activation(const std::string& name);
// True for the piecewise-linear kinds whose derivative jumps at 0.
bool has_kink(const Activation& act);

template <typename T>
T activate(const Activation& act, T x);
template <typename T>
T activate_derivative(const Activation& act, T x);

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& name);

// Layer descriptors. Parameter arrays live in the model's registry and are
// referenced by id.

struct LinearSpec {
  ArrayId weight = 0;  // (out, in)
  ArrayId bias = 0;    // (out)
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

struct ConvBNSpec {
  ArrayId kernel = 0;  // flattened filter matrix (out, in * kh * kw)
  ArrayId bias = 0;
  ArrayId mean = 0;
  ArrayId stddev = 0;
  ArrayId gamma = 0;
  ArrayId beta = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::relu();

  std::size_t row_length() const { return in_channels * kernel_h * kernel_w; }
};

// Two parameterized Conv-BN branches over the same input, summed.
struct ResidualSpec {
  ConvBNSpec first;
  ConvBNSpec second;
};

struct AttentionHead {
  ArrayId weight = 0;  // (rows, in)
  ArrayId bias = 0;    // (rows)
  std::size_t rows = 0;
};

// Projection-only multi-head layer: head outputs W_h x + b_h concatenated.
struct AttentionSpec {
  std::vector<AttentionHead> heads;
  std::size_t in_features = 0;

  std::size_t out_features() const;
  std::size_t head_offset(std::size_t head) const;
};

struct ActivationSpec {
  Activation activation;
};

struct FlattenSpec {};

using LayerSpec =
    std::variant<LinearSpec, ConvBNSpec, ResidualSpec, AttentionSpec, ActivationSpec, FlattenSpec>;

std::string layer_kind_name(const LayerSpec& layer);

// Layers that own output units (rows / channels) and therefore ZIGs.
bool is_compute_layer(const LayerSpec& layer);

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
};

// Output spatial extent for a conv layer; throws InvalidArgument when the
// kernel does not fit.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding, const char* axis);

template <typename T>
struct ConvBNWeights {
  const BasicTensor<T>& kernel;
  const BasicTensor<T>& bias;
  const BasicTensor<T>& mean;
  const BasicTensor<T>& stddev;
  const BasicTensor<T>& gamma;
  const BasicTensor<T>& beta;
};

// Gradient accumulators, same lengths as the corresponding arrays.
template <typename T>
struct ConvBNGrads {
  std::span<T> kernel;
  std::span<T> bias;
  std::span<T> gamma;
  std::span<T> beta;
};

/// Wx + b over the last axis; leading axes are batch.
template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias);

// Accumulates into d_weight / d_bias; returns the input adjoint.
template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& d_output, std::span<T> d_weight,
                               std::span<T> d_bias);

/// Conv then activation then inference-style BN:
///   O = I (*) K + b,  out = (a(O) - mu) / sigma * gamma + beta.
/// `pre_activation`, if given, receives O (needed for backward).
template <typename T>
BasicTensor<T> conv_bn_forward(const BasicTensor<T>& input, const ConvBNSpec& spec,
                               const ConvBNWeights<T>& w, BasicTensor<T>* pre_activation = nullptr);

template <typename T>
BasicTensor<T> conv_bn_backward(const BasicTensor<T>& input, const BasicTensor<T>& pre_activation,
                                const ConvBNSpec& spec, const ConvBNWeights<T>& w,
                                const BasicTensor<T>& d_output, ConvBNGrads<T> grads);

template <typename T>
BasicTensor<T> attention_forward(const BasicTensor<T>& input, const AttentionSpec& spec,
                                 const std::vector<const BasicTensor<T>*>& weights,
                                 const std::vector<const BasicTensor<T>*>& biases);

template <typename T>
BasicTensor<T> attention_backward(const BasicTensor<T>& input, const AttentionSpec& spec,
                                  const std::vector<const BasicTensor<T>*>& weights,
                                  const BasicTensor<T>& d_output,
                                  const std::vector<std::span<T>>& d_weights,
                                  const std::vector<std::span<T>>& d_biases);

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& input, const Activation& act);

template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& input, const Activation& act,
                                   const BasicTensor<T>& d_output);

/// Mean over the batch of -log softmax(logits)[label]. Labels hold class
/// indices. Writes d loss / d logits when `d_logits` is non-null.
template <typename T>
double softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& labels,
                             BasicTensor<T>* d_logits);

/// Mean over the batch of the per-sample sum of squared errors.
template <typename T>
double mean_squared_error(const BasicTensor<T>& output, const BasicTensor<T>& targets,
                          BasicTensor<T>* d_output);

}  // namespace oto
