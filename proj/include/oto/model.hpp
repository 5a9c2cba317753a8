#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oto/layers.hpp"
#include "oto/tensor.hpp"

namespace oto {

template <typename T>
struct ParamArray {
  std::string name;
  BasicTensor<T> value;
  bool trainable = true;
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> output;
  std::optional<double> loss;
};

/// Ordered layer list over a parameter registry.
///
/// Forward records the per-layer intermediates that backward consumes; one
/// instance must not be driven from two threads at once. Input batches have
/// shape (batch, sample_shape...).
template <typename T>
class BasicModel {
 public:
  BasicModel() = default;
  explicit BasicModel(Shape sample_shape, LossKind loss = LossKind::SoftmaxCrossEntropy);

  const Shape& sample_shape() const noexcept { return sample_shape_; }
  LossKind loss() const noexcept { return loss_; }
  void set_loss(LossKind loss) noexcept { loss_ = loss; }

  ArrayId add_array(std::string name, BasicTensor<T> value, bool trainable);
  // Appends a layer after checking it against the current output shape.
  void add_layer(LayerSpec layer);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<ParamArray<T>>& arrays() const noexcept { return arrays_; }
  ParamArray<T>& array(ArrayId id);
  const ParamArray<T>& array(ArrayId id) const;
  std::optional<ArrayId> find_array(const std::string& name) const;

  // Per-sample output shape of every layer, in order.
  std::vector<Shape> layer_output_shapes() const;
  Shape output_shape() const;
  // Re-checks every layer against its input shape and parameter arrays.
  void validate() const;

  // Flat view over trainable arrays, in registry order.
  std::size_t parameter_count() const;
  std::vector<std::size_t> flat_offsets() const;  // npos for non-trainable arrays
  std::vector<T> flat_parameters() const;
  void set_flat_parameters(std::span<const T> values);
  std::vector<T> flat_gradients() const;

  ForwardResult<T> forward(const BasicTensor<T>& batch, const BasicTensor<T>* targets = nullptr);
  // Requires a preceding forward with targets; overwrites every trainable
  // array's gradient with loss_adjoint * d loss / d param.
  void backward(T loss_adjoint = T{1});
  // Same, but seeded with an arbitrary output adjoint.
  void backward_from_output(const BasicTensor<T>& d_output);

  bool has_forward_state() const noexcept { return has_forward_; }
  void clear_forward_state();
  const BasicTensor<T>& layer_output(std::size_t layer) const;
  // Sign pattern (pre > 0) of every kinked pre-activation from the last
  // forward pass.
  std::vector<bool> activation_pattern() const;

  std::string describe() const;

  template <typename U>
  BasicModel<U> cast() const;

 private:
  struct LayerCache {
    BasicTensor<T> input;
    BasicTensor<T> output;
    BasicTensor<T> pre_first;
    BasicTensor<T> pre_second;
  };

  Shape layer_output_shape(const LayerSpec& layer, const Shape& in, std::size_t index) const;
  ConvBNWeights<T> conv_weights(const ConvBNSpec& spec) const;
  ConvBNGrads<T> conv_grads(const ConvBNSpec& spec);
  BasicTensor<T> forward_layer(std::size_t index, const BasicTensor<T>& input, LayerCache& cache) const;
  BasicTensor<T> backward_layer(std::size_t index, const BasicTensor<T>& d_output);

  template <typename>
  friend class BasicModel;

  Shape sample_shape_;
  LossKind loss_ = LossKind::SoftmaxCrossEntropy;
  std::vector<LayerSpec> layers_;
  std::vector<ParamArray<T>> arrays_;

  std::vector<LayerCache> cache_;
  BasicTensor<T> loss_adjoint_;
  bool has_loss_adjoint_ = false;
  bool has_forward_ = false;
};

using ModelGraph = BasicModel<float>;

extern template class BasicModel<float>;
extern template class BasicModel<double>;

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> out(sample_shape_, loss_);
  out.layers_ = layers_;
  out.arrays_.reserve(arrays_.size());
  for (const auto& a : arrays_) out.arrays_.push_back({a.name, a.value.template cast<U>(), a.trainable});
  return out;
}

/// Fluent construction with seeded initialization: weights ~ N(0, 2 / fan_in),
/// biases 0, BN mean 0, std 1, gamma 1, beta 0.
class ModelBuilder {
 public:
  ModelBuilder(Shape sample_shape, std::uint64_t seed);

  ModelBuilder& linear(std::size_t out_features);
  ModelBuilder& conv_bn(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0, Activation activation = Activation::relu());
  ModelBuilder& residual(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                         std::size_t padding = 0, Activation activation = Activation::relu());
  ModelBuilder& attention(const std::vector<std::size_t>& head_rows);
  ModelBuilder& activation(Activation activation);
  ModelBuilder& flatten();
  ModelBuilder& loss(LossKind kind);

  ModelGraph build() const { return model_; }

 private:
  ConvBNSpec make_conv(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                       std::size_t kernel, std::size_t stride, std::size_t padding, Activation act);
  Tensor random_matrix(std::size_t rows, std::size_t cols, double fan_in);
  std::string prefix() const;

  ModelGraph model_;
  std::mt19937_64 rng_;
};

/// Rebuilds `structure` with the widths and values found in `arrays` (matched
/// by name). Layer kinds, kernel sizes, strides and activations come from
/// `structure`; every array it names must be present.
ModelGraph rebuild_with_arrays(const ModelGraph& structure, const std::vector<ParamArray<float>>& arrays);

}  // namespace oto
