#include "oto/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oto/error.hpp"

namespace oto {

namespace {

constexpr std::size_t kNotTrainable = static_cast<std::size_t>(-1);

std::string layer_context(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + layer_kind_name(layer) + "): ";
}

// Re-raises a library error with the layer index prepended, keeping its type.
template <typename F>
auto with_layer_context(std::size_t index, const LayerSpec& layer, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidParameter& e) {
    throw InvalidParameter(layer_context(index, layer) + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(layer_context(index, layer) + e.what());
  } catch (const InvalidModel& e) {
    throw InvalidModel(layer_context(index, layer) + e.what());
  }
}

void expect_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (actual != expected) {
    throw InvalidModel(what + " has shape " + shape_to_string(actual) + ", expected " +
                       shape_to_string(expected));
  }
}

}  // namespace

template <typename T>
BasicModel<T>::BasicModel(Shape sample_shape, LossKind loss)
    : sample_shape_(std::move(sample_shape)), loss_(loss) {
  for (std::size_t i = 0; i < sample_shape_.size(); ++i) {
    if (sample_shape_[i] == 0) throw InvalidArgument("sample shape extent " + std::to_string(i) + " is zero");
  }
}

template <typename T>
ArrayId BasicModel<T>::add_array(std::string name, BasicTensor<T> value, bool trainable) {
  if (find_array(name)) throw InvalidModel("duplicate parameter array name '" + name + "'");
  arrays_.push_back({std::move(name), std::move(value), trainable});
  return arrays_.size() - 1;
}

template <typename T>
void BasicModel<T>::add_layer(LayerSpec layer) {
  const Shape in = layers_.empty() ? sample_shape_ : layer_output_shapes().back();
  layer_output_shape(layer, in, layers_.size());
  layers_.push_back(std::move(layer));
  clear_forward_state();
}

template <typename T>
ParamArray<T>& BasicModel<T>::array(ArrayId id) {
  if (id >= arrays_.size()) throw InvalidArgument("unknown array id " + std::to_string(id));
  return arrays_[id];
}

template <typename T>
const ParamArray<T>& BasicModel<T>::array(ArrayId id) const {
  if (id >= arrays_.size()) throw InvalidArgument("unknown array id " + std::to_string(id));
  return arrays_[id];
}

template <typename T>
std::optional<ArrayId> BasicModel<T>::find_array(const std::string& name) const {
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (arrays_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
Shape BasicModel<T>::layer_output_shape(const LayerSpec& layer, const Shape& in,
                                        std::size_t index) const {
  auto conv_shape = [&](const ConvBNSpec& c, const char* which) -> Shape {
    if (in.size() != 3) {
      throw InvalidModel(std::string(which) + " expects a (channels, h, w) input, got " +
                         shape_to_string(in));
    }
    if (in[0] != c.in_channels) {
      throw InvalidModel(std::string(which) + " input channels " + std::to_string(c.in_channels) +
                         " but previous layer produces " + std::to_string(in[0]));
    }
    const std::size_t oh = conv_out_extent(in[1], c.kernel_h, c.stride, c.padding, "height");
    const std::size_t ow = conv_out_extent(in[2], c.kernel_w, c.stride, c.padding, "width");
    expect_shape(array(c.kernel).value.shape(), {c.out_channels, c.row_length()}, "kernel");
    for (ArrayId id : {c.bias, c.mean, c.stddev, c.gamma, c.beta}) {
      expect_shape(array(id).value.shape(), {c.out_channels}, array(id).name);
    }
    return {c.out_channels, oh, ow};
  };

  return with_layer_context(index, layer, [&]() -> Shape {
    if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      if (in.empty() || in.back() != l->in_features) {
        throw InvalidModel("linear in_features " + std::to_string(l->in_features) +
                           " but previous layer produces " + shape_to_string(in));
      }
      expect_shape(array(l->weight).value.shape(), {l->out_features, l->in_features}, "weight");
      expect_shape(array(l->bias).value.shape(), {l->out_features}, "bias");
      Shape out = in;
      out.back() = l->out_features;
      return out;
    }
    if (const auto* c = std::get_if<ConvBNSpec>(&layer)) return conv_shape(*c, "convbn");
    if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      const Shape a = conv_shape(r->first, "residual branch 1");
      const Shape b = conv_shape(r->second, "residual branch 2");
      if (a[0] != b[0]) {
        throw InvalidModel("residual branches disagree on output channels: " + std::to_string(a[0]) +
                           " vs " + std::to_string(b[0]));
      }
      if (a != b) {
        throw InvalidModel("residual branch outputs differ: " + shape_to_string(a) + " vs " +
                           shape_to_string(b));
      }
      return a;
    }
    if (const auto* att = std::get_if<AttentionSpec>(&layer)) {
      if (att->heads.empty()) throw InvalidModel("attention needs at least one head");
      if (in.empty() || in.back() != att->in_features) {
        throw InvalidModel("attention in_features " + std::to_string(att->in_features) +
                           " but previous layer produces " + shape_to_string(in));
      }
      for (std::size_t h = 0; h < att->heads.size(); ++h) {
        const auto& head = att->heads[h];
        expect_shape(array(head.weight).value.shape(), {head.rows, att->in_features},
                     "head " + std::to_string(h) + " weight");
        expect_shape(array(head.bias).value.shape(), {head.rows}, "head " + std::to_string(h) + " bias");
      }
      Shape out = in;
      out.back() = att->out_features();
      return out;
    }
    if (std::holds_alternative<ActivationSpec>(layer)) return in;
    return Shape{element_count(in)};
  });
}

template <typename T>
std::vector<Shape> BasicModel<T>::layer_output_shapes() const {
  std::vector<Shape> shapes;
  shapes.reserve(layers_.size());
  Shape current = sample_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = layer_output_shape(layers_[i], current, i);
    shapes.push_back(current);
  }
  return shapes;
}

template <typename T>
Shape BasicModel<T>::output_shape() const {
  if (layers_.empty()) return sample_shape_;
  return layer_output_shapes().back();
}

template <typename T>
void BasicModel<T>::validate() const {
  layer_output_shapes();
  for (const auto& layer : layers_) {
    const ConvBNSpec* convs[2] = {nullptr, nullptr};
    if (const auto* c = std::get_if<ConvBNSpec>(&layer)) convs[0] = c;
    if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      convs[0] = &r->first;
      convs[1] = &r->second;
    }
    for (const auto* c : convs) {
      if (!c) continue;
      const auto& sd = array(c->stddev).value;
      for (std::size_t i = 0; i < sd.size(); ++i) {
        if (!(sd[i] > T{0})) {
          throw InvalidParameter(array(c->stddev).name + "[" + std::to_string(i) +
                                 "] must be strictly positive");
        }
      }
    }
  }
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) {
    if (a.trainable) n += a.value.size();
  }
  return n;
}

template <typename T>
std::vector<std::size_t> BasicModel<T>::flat_offsets() const {
  std::vector<std::size_t> offsets(arrays_.size(), kNotTrainable);
  std::size_t at = 0;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (!arrays_[i].trainable) continue;
    offsets[i] = at;
    at += arrays_[i].value.size();
  }
  return offsets;
}

template <typename T>
std::vector<T> BasicModel<T>::flat_parameters() const {
  std::vector<T> flat;
  flat.reserve(parameter_count());
  for (const auto& a : arrays_) {
    if (a.trainable) flat.insert(flat.end(), a.value.data().begin(), a.value.data().end());
  }
  return flat;
}

template <typename T>
void BasicModel<T>::set_flat_parameters(std::span<const T> values) {
  if (values.size() != parameter_count()) {
    throw InvalidArgument("flat parameter length " + std::to_string(values.size()) + " != " +
                          std::to_string(parameter_count()));
  }
  std::size_t at = 0;
  for (auto& a : arrays_) {
    if (!a.trainable) continue;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), a.value.size(), a.value.data().begin());
    at += a.value.size();
  }
  clear_forward_state();
}

template <typename T>
std::vector<T> BasicModel<T>::flat_gradients() const {
  std::vector<T> flat;
  flat.reserve(parameter_count());
  for (const auto& a : arrays_) {
    if (!a.trainable) continue;
    if (!a.value.has_grad()) throw StateError("no gradient for '" + a.name + "'; run backward first");
    flat.insert(flat.end(), a.value.grad().begin(), a.value.grad().end());
  }
  return flat;
}

template <typename T>
ConvBNWeights<T> BasicModel<T>::conv_weights(const ConvBNSpec& s) const {
  return {array(s.kernel).value, array(s.bias).value,  array(s.mean).value,
          array(s.stddev).value, array(s.gamma).value, array(s.beta).value};
}

template <typename T>
ConvBNGrads<T> BasicModel<T>::conv_grads(const ConvBNSpec& s) {
  return {array(s.kernel).value.grad(), array(s.bias).value.grad(), array(s.gamma).value.grad(),
          array(s.beta).value.grad()};
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_layer(std::size_t index, const BasicTensor<T>& input,
                                            LayerCache& cache) const {
  const LayerSpec& layer = layers_[index];
  if (const auto* l = std::get_if<LinearSpec>(&layer)) {
    return linear_forward(input, array(l->weight).value, array(l->bias).value);
  }
  if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
    return conv_bn_forward(input, *c, conv_weights(*c), &cache.pre_first);
  }
  if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
    BasicTensor<T> a = conv_bn_forward(input, r->first, conv_weights(r->first), &cache.pre_first);
    const BasicTensor<T> b = conv_bn_forward(input, r->second, conv_weights(r->second), &cache.pre_second);
    auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
    return a;
  }
  if (const auto* att = std::get_if<AttentionSpec>(&layer)) {
    std::vector<const BasicTensor<T>*> w, b;
    for (const auto& h : att->heads) {
      w.push_back(&array(h.weight).value);
      b.push_back(&array(h.bias).value);
    }
    return attention_forward(input, *att, w, b);
  }
  if (const auto* a = std::get_if<ActivationSpec>(&layer)) return activation_forward(input, a->activation);
  // Flatten
  return input.reshaped({input.extent(0), input.size() / input.extent(0)});
}

template <typename T>
ForwardResult<T> BasicModel<T>::forward(const BasicTensor<T>& batch, const BasicTensor<T>* targets) {
  clear_forward_state();
  if (batch.rank() != sample_shape_.size() + 1 ||
      !std::equal(sample_shape_.begin(), sample_shape_.end(), batch.shape().begin() + 1)) {
    throw InvalidArgument("input shape " + shape_to_string(batch.shape()) +
                          " is not (batch, " + shape_to_string(sample_shape_) + ")");
  }
  std::vector<LayerCache> cache(layers_.size());
  BasicTensor<T> current = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache[i].input = current;
    current = with_layer_context(i, layers_[i], [&] { return forward_layer(i, cache[i].input, cache[i]); });
    cache[i].output = current;
  }
  cache_ = std::move(cache);
  has_forward_ = true;

  ForwardResult<T> result{current, std::nullopt};
  if (targets) {
    BasicTensor<T> d_out;
    if (loss_ == LossKind::SoftmaxCrossEntropy) {
      result.loss = softmax_cross_entropy(current, *targets, &d_out);
    } else {
      result.loss = mean_squared_error(current, *targets, &d_out);
    }
    loss_adjoint_ = std::move(d_out);
    has_loss_adjoint_ = true;
  }
  return result;
}

template <typename T>
BasicTensor<T> BasicModel<T>::backward_layer(std::size_t index, const BasicTensor<T>& d_output) {
  const LayerSpec& layer = layers_[index];
  LayerCache& c = cache_[index];
  if (const auto* l = std::get_if<LinearSpec>(&layer)) {
    return linear_backward(c.input, array(l->weight).value, d_output, array(l->weight).value.grad(),
                           array(l->bias).value.grad());
  }
  if (const auto* cb = std::get_if<ConvBNSpec>(&layer)) {
    return conv_bn_backward(c.input, c.pre_first, *cb, conv_weights(*cb), d_output, conv_grads(*cb));
  }
  if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
    BasicTensor<T> a =
        conv_bn_backward(c.input, c.pre_first, r->first, conv_weights(r->first), d_output, conv_grads(r->first));
    const BasicTensor<T> b = conv_bn_backward(c.input, c.pre_second, r->second, conv_weights(r->second),
                                              d_output, conv_grads(r->second));
    auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
    return a;
  }
  if (const auto* att = std::get_if<AttentionSpec>(&layer)) {
    std::vector<const BasicTensor<T>*> w;
    std::vector<std::span<T>> dw, db;
    for (const auto& h : att->heads) {
      w.push_back(&array(h.weight).value);
      dw.push_back(array(h.weight).value.grad());
      db.push_back(array(h.bias).value.grad());
    }
    return attention_backward(c.input, *att, w, d_output, dw, db);
  }
  if (const auto* a = std::get_if<ActivationSpec>(&layer)) {
    return activation_backward(c.input, a->activation, d_output);
  }
  return d_output.reshaped(c.input.shape());
}

template <typename T>
void BasicModel<T>::backward(T loss_adjoint) {
  if (!has_loss_adjoint_) {
    throw StateError("backward called without a preceding forward pass with targets");
  }
  BasicTensor<T> seed = loss_adjoint_;
  for (auto& v : seed.data()) v *= loss_adjoint;
  backward_from_output(seed);
}

template <typename T>
void BasicModel<T>::backward_from_output(const BasicTensor<T>& d_output) {
  if (!has_forward_) {
    throw StateError("backward called before forward");
  }
  if (!layers_.empty() && d_output.shape() != cache_.back().output.shape()) {
    throw InvalidArgument("output adjoint shape " + shape_to_string(d_output.shape()) +
                          " does not match output " + shape_to_string(cache_.back().output.shape()));
  }
  for (auto& a : arrays_) {
    if (a.trainable) a.value.zero_grad();
  }
  BasicTensor<T> d = d_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    d = with_layer_context(i, layers_[i], [&] { return backward_layer(i, d); });
  }
}

template <typename T>
void BasicModel<T>::clear_forward_state() {
  cache_.clear();
  has_forward_ = false;
  has_loss_adjoint_ = false;
}

template <typename T>
const BasicTensor<T>& BasicModel<T>::layer_output(std::size_t layer) const {
  if (layer >= cache_.size()) throw StateError("no forward state for layer " + std::to_string(layer));
  return cache_[layer].output;
}

template <typename T>
std::vector<bool> BasicModel<T>::activation_pattern() const {
  std::vector<bool> pattern;
  auto append = [&](const BasicTensor<T>& pre) {
    for (const T v : pre.data()) pattern.push_back(v > T{0});
  };
  for (std::size_t i = 0; i < cache_.size(); ++i) {
    const LayerSpec& layer = layers_[i];
    if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
      if (has_kink(c->activation)) append(cache_[i].pre_first);
    } else if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      if (has_kink(r->first.activation)) append(cache_[i].pre_first);
      if (has_kink(r->second.activation)) append(cache_[i].pre_second);
    } else if (const auto* a = std::get_if<ActivationSpec>(&layer)) {
      if (has_kink(a->activation)) append(cache_[i].input);
    }
  }
  return pattern;
}

template <typename T>
std::string BasicModel<T>::describe() const {
  std::ostringstream os;
  os << "input" << shape_to_string(sample_shape_);
  auto conv = [&](const ConvBNSpec& c) {
    os << "out=" << c.out_channels << ",k=" << c.kernel_h << "x" << c.kernel_w << ",s=" << c.stride
       << ",p=" << c.padding << ",act=" << to_string(c.activation.kind);
  };
  for (const auto& layer : layers_) {
    os << " -> " << layer_kind_name(layer) << "(";
    if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      os << "in=" << l->in_features << ",out=" << l->out_features;
    } else if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
      os << "in=" << c->in_channels << ",";
      conv(*c);
    } else if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      os << "in=" << r->first.in_channels << ",";
      conv(r->first);
    } else if (const auto* att = std::get_if<AttentionSpec>(&layer)) {
      os << "in=" << att->in_features << ",heads=";
      for (std::size_t h = 0; h < att->heads.size(); ++h) os << (h ? "/" : "") << att->heads[h].rows;
    } else if (const auto* a = std::get_if<ActivationSpec>(&layer)) {
      os << to_string(a->activation.kind);
    }
    os << ")";
  }
  os << " | loss=" << to_string(loss_);
  return os.str();
}

template class BasicModel<float>;
template class BasicModel<double>;

// ---------------------------------------------------------------------------

ModelBuilder::ModelBuilder(Shape sample_shape, std::uint64_t seed)
    : model_(std::move(sample_shape)), rng_(seed) {}

std::string ModelBuilder::prefix() const { return "layer" + std::to_string(model_.layers().size()); }

Tensor ModelBuilder::random_matrix(std::size_t rows, std::size_t cols, double fan_in) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(normal(rng_));
  return t;
}

ModelBuilder& ModelBuilder::linear(std::size_t out_features) {
  const Shape in = model_.output_shape();
  if (in.empty()) throw InvalidModel("linear layer needs a non-scalar input");
  const std::size_t n = in.back();
  LinearSpec spec;
  spec.in_features = n;
  spec.out_features = out_features;
  spec.weight = model_.add_array(prefix() + ".weight", random_matrix(out_features, n, static_cast<double>(n)), true);
  spec.bias = model_.add_array(prefix() + ".bias", Tensor({out_features}), true);
  model_.add_layer(spec);
  return *this;
}

ConvBNSpec ModelBuilder::make_conv(const std::string& p, std::size_t in_channels, std::size_t out_channels,
                                   std::size_t kernel, std::size_t stride, std::size_t padding,
                                   Activation act) {
  ConvBNSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_h = spec.kernel_w = kernel;
  spec.stride = stride;
  spec.padding = padding;
  spec.activation = act;
  const double fan_in = static_cast<double>(spec.row_length());
  spec.kernel = model_.add_array(p + ".kernel", random_matrix(out_channels, spec.row_length(), fan_in), true);
  spec.bias = model_.add_array(p + ".bias", Tensor({out_channels}), true);
  spec.mean = model_.add_array(p + ".bn_mean", Tensor({out_channels}), false);
  spec.stddev = model_.add_array(p + ".bn_std", Tensor::filled({out_channels}, 1.0f), false);
  spec.gamma = model_.add_array(p + ".bn_gamma", Tensor::filled({out_channels}, 1.0f), true);
  spec.beta = model_.add_array(p + ".bn_beta", Tensor({out_channels}), true);
  return spec;
}

ModelBuilder& ModelBuilder::conv_bn(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                                    std::size_t padding, Activation activation) {
  const Shape in = model_.output_shape();
  if (in.size() != 3) throw InvalidModel("convbn needs a (channels, h, w) input, got " + shape_to_string(in));
  model_.add_layer(make_conv(prefix(), in[0], out_channels, kernel, stride, padding, activation));
  return *this;
}

ModelBuilder& ModelBuilder::residual(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                                     std::size_t padding, Activation activation) {
  const Shape in = model_.output_shape();
  if (in.size() != 3) throw InvalidModel("residual needs a (channels, h, w) input, got " + shape_to_string(in));
  ResidualSpec spec;
  spec.first = make_conv(prefix() + ".branch1", in[0], out_channels, kernel, stride, padding, activation);
  spec.second = make_conv(prefix() + ".branch2", in[0], out_channels, kernel, stride, padding, activation);
  model_.add_layer(spec);
  return *this;
}

ModelBuilder& ModelBuilder::attention(const std::vector<std::size_t>& head_rows) {
  const Shape in = model_.output_shape();
  if (in.empty()) throw InvalidModel("attention layer needs a non-scalar input");
  AttentionSpec spec;
  spec.in_features = in.back();
  for (std::size_t h = 0; h < head_rows.size(); ++h) {
    AttentionHead head;
    head.rows = head_rows[h];
    const std::string p = prefix() + ".head" + std::to_string(h);
    head.weight = model_.add_array(p + ".weight",
                                   random_matrix(head.rows, spec.in_features, static_cast<double>(spec.in_features)),
                                   true);
    head.bias = model_.add_array(p + ".bias", Tensor({head.rows}), true);
    spec.heads.push_back(head);
  }
  model_.add_layer(spec);
  return *this;
}

ModelBuilder& ModelBuilder::activation(Activation activation) {
  model_.add_layer(ActivationSpec{activation});
  return *this;
}

ModelBuilder& ModelBuilder::flatten() {
  model_.add_layer(FlattenSpec{});
  return *this;
}

ModelBuilder& ModelBuilder::loss(LossKind kind) {
  model_.set_loss(kind);
  return *this;
}

// ---------------------------------------------------------------------------

ModelGraph rebuild_with_arrays(const ModelGraph& structure, const std::vector<ParamArray<float>>& arrays) {
  ModelGraph out(structure.sample_shape(), structure.loss());
  auto lookup = [&](const std::string& name) -> const ParamArray<float>& {
    for (const auto& a : arrays) {
      if (a.name == name) return a;
    }
    throw InvalidModel("parameter array '" + name + "' missing");
  };
  std::vector<ArrayId> remap(structure.arrays().size());
  for (std::size_t i = 0; i < structure.arrays().size(); ++i) {
    const auto& src = structure.arrays()[i];
    remap[i] = out.add_array(src.name, lookup(src.name).value, src.trainable);
  }
  auto conv = [&](ConvBNSpec c) {
    const Tensor& k = lookup(structure.array(c.kernel).name).value;
    if (k.rank() != 2 || k.extent(1) % (c.kernel_h * c.kernel_w) != 0) {
      throw InvalidModel("kernel '" + structure.array(c.kernel).name + "' has incompatible shape " +
                         shape_to_string(k.shape()));
    }
    c.out_channels = k.extent(0);
    c.in_channels = k.extent(1) / (c.kernel_h * c.kernel_w);
    for (ArrayId* id : {&c.kernel, &c.bias, &c.mean, &c.stddev, &c.gamma, &c.beta}) *id = remap[*id];
    return c;
  };
  for (const auto& layer : structure.layers()) {
    if (auto l = std::get_if<LinearSpec>(&layer)) {
      LinearSpec s = *l;
      const Tensor& w = lookup(structure.array(s.weight).name).value;
      if (w.rank() != 2) throw InvalidModel("weight '" + structure.array(s.weight).name + "' must be rank 2");
      s.out_features = w.extent(0);
      s.in_features = w.extent(1);
      s.weight = remap[s.weight];
      s.bias = remap[s.bias];
      out.add_layer(s);
    } else if (auto c = std::get_if<ConvBNSpec>(&layer)) {
      out.add_layer(conv(*c));
    } else if (auto r = std::get_if<ResidualSpec>(&layer)) {
      out.add_layer(ResidualSpec{conv(r->first), conv(r->second)});
    } else if (auto att = std::get_if<AttentionSpec>(&layer)) {
      AttentionSpec s = *att;
      for (auto& h : s.heads) {
        const Tensor& w = lookup(structure.array(h.weight).name).value;
        if (w.rank() != 2) throw InvalidModel("head weight must be rank 2");
        h.rows = w.extent(0);
        s.in_features = w.extent(1);
        h.weight = remap[h.weight];
        h.bias = remap[h.bias];
      }
      out.add_layer(s);
    } else {
      out.add_layer(layer);
    }
  }
  out.validate();
  return out;
}

}  // namespace oto
