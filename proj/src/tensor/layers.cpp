#include "oto/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oto/error.hpp"

namespace oto {

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "leaky_relu";
    case ActivationKind::PReLU: return "prelu";
    case ActivationKind::GELU: return "gelu";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "none") return Activation::identity();
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu" || name == "leakyrelu") return Activation::leaky_relu();
  if (name == "prelu") return Activation::prelu();
  if (name == "gelu") return Activation::gelu();
  throw InvalidArgument("unknown activation '" + name + "'");
}

bool has_kink(const Activation& act) {
  return act.kind == ActivationKind::ReLU || act.kind == ActivationKind::LeakyReLU ||
         act.kind == ActivationKind::PReLU;
}

template <typename T>
T activate(const Activation& act, T x) {
  switch (act.kind) {
    case ActivationKind::Identity: return x;
    case ActivationKind::ReLU: return x > T{0} ? x : T{0};
    case ActivationKind::LeakyReLU:
    case ActivationKind::PReLU: return x > T{0} ? x : static_cast<T>(act.slope) * x;
    case ActivationKind::GELU:
      return T{0.5} * x * (T{1} + std::erf(x / static_cast<T>(std::numbers::sqrt2)));
  }
  return x;
}

template <typename T>
T activate_derivative(const Activation& act, T x) {
  switch (act.kind) {
    case ActivationKind::Identity: return T{1};
    case ActivationKind::ReLU: return x > T{0} ? T{1} : T{0};
    case ActivationKind::LeakyReLU:
    case ActivationKind::PReLU: return x > T{0} ? T{1} : static_cast<T>(act.slope);
    case ActivationKind::GELU: {
      const T cdf = T{0.5} * (T{1} + std::erf(x / static_cast<T>(std::numbers::sqrt2)));
      const T pdf = std::exp(T{-0.5} * x * x) / static_cast<T>(std::sqrt(2.0 * std::numbers::pi));
      return cdf + x * pdf;
    }
  }
  return T{1};
}

std::string to_string(LossKind kind) {
  return kind == LossKind::SoftmaxCrossEntropy ? "softmax_cross_entropy" : "mse";
}

LossKind parse_loss(const std::string& name) {
  if (name == "softmax_cross_entropy" || name == "cross_entropy" || name == "ce") {
    return LossKind::SoftmaxCrossEntropy;
  }
  if (name == "mse" || name == "mean_squared_error") return LossKind::MeanSquaredError;
  throw InvalidArgument("unknown loss '" + name + "'");
}

std::size_t AttentionSpec::out_features() const {
  std::size_t n = 0;
  for (const auto& h : heads) n += h.rows;
  return n;
}

std::size_t AttentionSpec::head_offset(std::size_t head) const {
  std::size_t n = 0;
  for (std::size_t h = 0; h < head; ++h) n += heads[h].rows;
  return n;
}

std::string layer_kind_name(const LayerSpec& layer) {
  struct Visitor {
    std::string operator()(const LinearSpec&) const { return "linear"; }
    std::string operator()(const ConvBNSpec&) const { return "convbn"; }
    std::string operator()(const ResidualSpec&) const { return "residual"; }
    std::string operator()(const AttentionSpec&) const { return "attention"; }
    std::string operator()(const ActivationSpec&) const { return "activation"; }
    std::string operator()(const FlattenSpec&) const { return "flatten"; }
  };
  return std::visit(Visitor{}, layer);
}

bool is_compute_layer(const LayerSpec& layer) {
  return std::holds_alternative<LinearSpec>(layer) || std::holds_alternative<ConvBNSpec>(layer) ||
         std::holds_alternative<ResidualSpec>(layer) ||
         std::holds_alternative<AttentionSpec>(layer);
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding, const char* axis) {
  if (stride == 0) throw InvalidArgument("conv stride must be positive");
  if (in + 2 * padding < kernel) {
    throw InvalidArgument(std::string("conv kernel ") + axis + " extent " + std::to_string(kernel) +
                          " exceeds padded input " + axis + " extent " +
                          std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Linear

namespace {

template <typename T>
std::size_t rows_of(const BasicTensor<T>& input, std::size_t features, const char* what) {
  if (input.rank() == 0 || input.shape().back() != features) {
    throw InvalidArgument(std::string(what) + ": input last extent " +
                          (input.rank() ? std::to_string(input.shape().back()) : std::string("<none>")) +
                          " does not match in_features " + std::to_string(features));
  }
  return input.size() / features;
}

template <typename T>
void check_matrix(const BasicTensor<T>& weight, const BasicTensor<T>& bias, const char* what) {
  if (weight.rank() != 2) {
    throw InvalidArgument(std::string(what) + ": weight must be rank 2, got " +
                          shape_to_string(weight.shape()));
  }
  if (bias.rank() != 1 || bias.extent(0) != weight.extent(0)) {
    throw InvalidArgument(std::string(what) + ": bias extent " + shape_to_string(bias.shape()) +
                          " does not match weight rows " + std::to_string(weight.extent(0)));
  }
}

// out[r, o] = sum_i in[r, i] * W[o, i] + b[o], written with a column offset
// into a wider output row (used by attention for head concatenation).
template <typename T>
void matmul_rows(std::span<const T> in, std::size_t rows, std::size_t n, std::span<const T> w,
                 std::span<const T> b, std::size_t m, std::span<T> out, std::size_t out_stride,
                 std::size_t out_offset) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in.data() + r * n;
    for (std::size_t o = 0; o < m; ++o) {
      const T* wr = w.data() + o * n;
      double acc = static_cast<double>(b[o]);
      for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(wr[i]) * static_cast<double>(x[i]);
      out[r * out_stride + out_offset + o] = static_cast<T>(acc);
    }
  }
}

// Adjoint of matmul_rows. d_in is accumulated in double by the caller.
template <typename T>
void matmul_rows_backward(std::span<const T> in, std::size_t rows, std::size_t n,
                          std::span<const T> w, std::size_t m, std::span<const T> d_out,
                          std::size_t out_stride, std::size_t out_offset, std::span<T> d_w,
                          std::span<T> d_b, std::vector<double>& d_in) {
  for (std::size_t o = 0; o < m; ++o) {
    double gb = 0.0;
    for (std::size_t r = 0; r < rows; ++r) gb += static_cast<double>(d_out[r * out_stride + out_offset + o]);
    d_b[o] += static_cast<T>(gb);
    for (std::size_t i = 0; i < n; ++i) {
      double gw = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        gw += static_cast<double>(d_out[r * out_stride + out_offset + o]) *
              static_cast<double>(in[r * n + i]);
      }
      d_w[o * n + i] += static_cast<T>(gw);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < m; ++o) {
      const double g = static_cast<double>(d_out[r * out_stride + out_offset + o]);
      if (g == 0.0) continue;
      const T* wr = w.data() + o * n;
      for (std::size_t i = 0; i < n; ++i) d_in[r * n + i] += g * static_cast<double>(wr[i]);
    }
  }
}

template <typename T>
BasicTensor<T> to_tensor(Shape shape, const std::vector<double>& acc) {
  std::vector<T> data(acc.size());
  std::transform(acc.begin(), acc.end(), data.begin(), [](double v) { return static_cast<T>(v); });
  return BasicTensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias) {
  check_matrix(weight, bias, "linear");
  const std::size_t m = weight.extent(0);
  const std::size_t n = weight.extent(1);
  const std::size_t rows = rows_of(input, n, "linear");
  Shape out_shape = input.shape();
  out_shape.back() = m;
  BasicTensor<T> out(out_shape);
  matmul_rows<T>(input.data(), rows, n, weight.data(), bias.data(), m, out.data(), m, 0);
  return out;
}

template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& d_output, std::span<T> d_weight,
                               std::span<T> d_bias) {
  const std::size_t m = weight.extent(0);
  const std::size_t n = weight.extent(1);
  const std::size_t rows = rows_of(input, n, "linear backward");
  if (d_output.size() != rows * m) throw InvalidArgument("linear backward: output adjoint size mismatch");
  std::vector<double> d_in(input.size(), 0.0);
  matmul_rows_backward<T>(input.data(), rows, n, weight.data(), m, d_output.data(), m, 0, d_weight,
                          d_bias, d_in);
  return to_tensor<T>(input.shape(), d_in);
}

// ---------------------------------------------------------------------------
// Conv-BN

namespace {

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const ConvBNSpec& spec,
                           const ConvBNWeights<T>& w) {
  if (input.rank() != 4) {
    throw InvalidArgument("convbn: input must be rank 4 (batch, channels, h, w), got " +
                          shape_to_string(input.shape()));
  }
  if (input.extent(1) != spec.in_channels) {
    throw InvalidArgument("convbn: input channel extent " + std::to_string(input.extent(1)) +
                          " does not match in_channels " + std::to_string(spec.in_channels));
  }
  const std::size_t m = spec.out_channels;
  if (w.kernel.rank() != 2 || w.kernel.extent(0) != m || w.kernel.extent(1) != spec.row_length()) {
    throw InvalidArgument("convbn: kernel shape " + shape_to_string(w.kernel.shape()) +
                          " does not match (out_channels=" + std::to_string(m) +
                          ", row_length=" + std::to_string(spec.row_length()) + ")");
  }
  for (const auto* v : {&w.bias, &w.mean, &w.stddev, &w.gamma, &w.beta}) {
    if (v->rank() != 1 || v->extent(0) != m) {
      throw InvalidArgument("convbn: per-channel vector extent " + shape_to_string(v->shape()) +
                            " does not match out_channels " + std::to_string(m));
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (!(w.stddev[c] > T{0})) {
      throw InvalidParameter("convbn: sigma[" + std::to_string(c) + "] = " +
                             std::to_string(static_cast<double>(w.stddev[c])) +
                             " must be strictly positive");
    }
  }
  ConvGeometry g;
  g.batch = input.extent(0);
  g.in_channels = spec.in_channels;
  g.in_h = input.extent(2);
  g.in_w = input.extent(3);
  g.out_channels = m;
  g.kernel_h = spec.kernel_h;
  g.kernel_w = spec.kernel_w;
  g.stride = spec.stride;
  g.padding = spec.padding;
  conv_out_extent(g.in_h, g.kernel_h, g.stride, g.padding, "height");
  conv_out_extent(g.in_w, g.kernel_w, g.stride, g.padding, "width");
  return g;
}

}  // namespace

template <typename T>
BasicTensor<T> conv_bn_forward(const BasicTensor<T>& input, const ConvBNSpec& spec,
                               const ConvBNWeights<T>& w, BasicTensor<T>* pre_activation) {
  const ConvGeometry g = conv_geometry(input, spec, w);
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t row = spec.row_length();
  BasicTensor<T> out({g.batch, g.out_channels, oh, ow});
  BasicTensor<T> pre({g.batch, g.out_channels, oh, ow});
  const auto in = input.data();
  const auto k = w.kernel.data();
  auto o = out.data();
  auto p = pre.data();

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.out_channels; ++c) {
      const T* kr = k.data() + c * row;
      const double mu = static_cast<double>(w.mean[c]);
      const double sigma = static_cast<double>(w.stddev[c]);
      const double gamma = static_cast<double>(w.gamma[c]);
      const double beta = static_cast<double>(w.beta[c]);
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = static_cast<double>(w.bias[c]);
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                acc += static_cast<double>(kr[(ci * g.kernel_h + ky) * g.kernel_w + kx]) *
                       static_cast<double>(in[((b * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix]);
              }
            }
          }
          const std::size_t at = ((b * g.out_channels + c) * oh + oy) * ow + ox;
          const T pre_value = static_cast<T>(acc);
          p[at] = pre_value;
          const double a = static_cast<double>(activate(spec.activation, pre_value));
          o[at] = static_cast<T>((a - mu) / sigma * gamma + beta);
        }
      }
    }
  }
  if (pre_activation) *pre_activation = std::move(pre);
  return out;
}

template <typename T>
BasicTensor<T> conv_bn_backward(const BasicTensor<T>& input, const BasicTensor<T>& pre_activation,
                                const ConvBNSpec& spec, const ConvBNWeights<T>& w,
                                const BasicTensor<T>& d_output, ConvBNGrads<T> grads) {
  const ConvGeometry g = conv_geometry(input, spec, w);
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t row = spec.row_length();
  const std::size_t plane = oh * ow;
  if (d_output.size() != g.batch * g.out_channels * plane || pre_activation.size() != d_output.size()) {
    throw InvalidArgument("convbn backward: adjoint shape mismatch");
  }
  const auto in = input.data();
  const auto k = w.kernel.data();
  const auto pre = pre_activation.data();
  const auto dout = d_output.data();

  // Adjoint of the conv output O.
  std::vector<double> d_pre(d_output.size());
  for (std::size_t c = 0; c < g.out_channels; ++c) {
    const double mu = static_cast<double>(w.mean[c]);
    const double sigma = static_cast<double>(w.stddev[c]);
    const double gamma = static_cast<double>(w.gamma[c]);
    double g_gamma = 0.0, g_beta = 0.0, g_bias = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const std::size_t base = (b * g.out_channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(dout[base + i]);
        const T x = pre[base + i];
        g_gamma += d * (static_cast<double>(activate(spec.activation, x)) - mu) / sigma;
        g_beta += d;
        const double dp = d * gamma / sigma * static_cast<double>(activate_derivative(spec.activation, x));
        d_pre[base + i] = dp;
        g_bias += dp;
      }
    }
    grads.gamma[c] += static_cast<T>(g_gamma);
    grads.beta[c] += static_cast<T>(g_beta);
    grads.bias[c] += static_cast<T>(g_bias);
  }

  std::vector<double> d_in(input.size(), 0.0);
  for (std::size_t c = 0; c < g.out_channels; ++c) {
    const T* kr = k.data() + c * row;
    std::vector<double> g_kernel(row, 0.0);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double d = d_pre[((b * g.out_channels + c) * oh + oy) * ow + ox];
          if (d == 0.0) continue;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t kidx = (ci * g.kernel_h + ky) * g.kernel_w + kx;
                const std::size_t iidx = ((b * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix;
                g_kernel[kidx] += d * static_cast<double>(in[iidx]);
                d_in[iidx] += d * static_cast<double>(kr[kidx]);
              }
            }
          }
        }
      }
    }
    for (std::size_t r = 0; r < row; ++r) grads.kernel[c * row + r] += static_cast<T>(g_kernel[r]);
  }
  return to_tensor<T>(input.shape(), d_in);
}

// ---------------------------------------------------------------------------
// Attention (projection-only)

namespace {

template <typename T>
void check_heads(const AttentionSpec& spec, const std::vector<const BasicTensor<T>*>& weights,
                 const std::vector<const BasicTensor<T>*>* biases) {
  if (weights.size() != spec.heads.size() || (biases && biases->size() != spec.heads.size())) {
    throw InvalidArgument("attention: expected " + std::to_string(spec.heads.size()) + " heads");
  }
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    const auto& w = *weights[h];
    if (w.rank() != 2 || w.extent(0) != spec.heads[h].rows || w.extent(1) != spec.in_features) {
      throw InvalidArgument("attention: head " + std::to_string(h) + " weight shape " +
                            shape_to_string(w.shape()) + " inconsistent with declared rows " +
                            std::to_string(spec.heads[h].rows) + " and in_features " +
                            std::to_string(spec.in_features));
    }
    if (biases) {
      const auto& b = *(*biases)[h];
      if (b.rank() != 1 || b.extent(0) != spec.heads[h].rows) {
        throw InvalidArgument("attention: head " + std::to_string(h) + " bias extent " +
                              shape_to_string(b.shape()) + " inconsistent with declared rows " +
                              std::to_string(spec.heads[h].rows));
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> attention_forward(const BasicTensor<T>& input, const AttentionSpec& spec,
                                 const std::vector<const BasicTensor<T>*>& weights,
                                 const std::vector<const BasicTensor<T>*>& biases) {
  check_heads(spec, weights, &biases);
  const std::size_t n = spec.in_features;
  const std::size_t rows = rows_of(input, n, "attention");
  const std::size_t total = spec.out_features();
  Shape out_shape = input.shape();
  out_shape.back() = total;
  BasicTensor<T> out(out_shape);
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    matmul_rows<T>(input.data(), rows, n, weights[h]->data(), biases[h]->data(), spec.heads[h].rows,
                   out.data(), total, spec.head_offset(h));
  }
  return out;
}

template <typename T>
BasicTensor<T> attention_backward(const BasicTensor<T>& input, const AttentionSpec& spec,
                                  const std::vector<const BasicTensor<T>*>& weights,
                                  const BasicTensor<T>& d_output,
                                  const std::vector<std::span<T>>& d_weights,
                                  const std::vector<std::span<T>>& d_biases) {
  check_heads<T>(spec, weights, nullptr);
  const std::size_t n = spec.in_features;
  const std::size_t rows = rows_of(input, n, "attention backward");
  const std::size_t total = spec.out_features();
  std::vector<double> d_in(input.size(), 0.0);
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    matmul_rows_backward<T>(input.data(), rows, n, weights[h]->data(), spec.heads[h].rows,
                            d_output.data(), total, spec.head_offset(h), d_weights[h], d_biases[h],
                            d_in);
  }
  return to_tensor<T>(input.shape(), d_in);
}

// ---------------------------------------------------------------------------
// Activation

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& input, const Activation& act) {
  BasicTensor<T> out(input.shape());
  auto o = out.data();
  const auto x = input.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = activate(act, x[i]);
  return out;
}

template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& input, const Activation& act,
                                   const BasicTensor<T>& d_output) {
  BasicTensor<T> out(input.shape());
  auto o = out.data();
  const auto x = input.data();
  const auto d = d_output.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = d[i] * activate_derivative(act, x[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
double softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& labels,
                             BasicTensor<T>* d_logits) {
  if (logits.rank() != 2) {
    throw InvalidArgument("cross entropy: logits must be rank 2, got " + shape_to_string(logits.shape()));
  }
  const std::size_t batch = logits.extent(0);
  const std::size_t classes = logits.extent(1);
  if (labels.size() != batch) {
    throw InvalidArgument("cross entropy: label count " + std::to_string(labels.size()) +
                          " does not match batch extent " + std::to_string(batch));
  }
  if (d_logits) *d_logits = BasicTensor<T>(logits.shape());
  const auto z = logits.data();
  double total = 0.0;
  std::vector<double> p(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const double raw = static_cast<double>(labels[b]);
    if (!(raw >= 0.0) || raw >= static_cast<double>(classes) || raw != std::floor(raw)) {
      throw InvalidArgument("cross entropy: label " + std::to_string(raw) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    const auto label = static_cast<std::size_t>(raw);
    const T* row = z.data() + b * classes;
    double mx = static_cast<double>(row[0]);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(static_cast<double>(row[c]) - mx);
      sum += p[c];
    }
    total += std::log(sum) + mx - static_cast<double>(row[label]);
    if (d_logits) {
      auto d = d_logits->data();
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = c == label ? 1.0 : 0.0;
        d[b * classes + c] = static_cast<T>((p[c] / sum - target) / static_cast<double>(batch));
      }
    }
  }
  return total / static_cast<double>(batch);
}

template <typename T>
double mean_squared_error(const BasicTensor<T>& output, const BasicTensor<T>& targets,
                          BasicTensor<T>* d_output) {
  if (output.size() != targets.size() || output.rank() == 0) {
    throw InvalidArgument("mse: target shape " + shape_to_string(targets.shape()) +
                          " does not match output shape " + shape_to_string(output.shape()));
  }
  const std::size_t batch = output.extent(0);
  if (d_output) *d_output = BasicTensor<T>(output.shape());
  double total = 0.0;
  const auto y = output.data();
  const auto t = targets.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = static_cast<double>(y[i]) - static_cast<double>(t[i]);
    total += r * r;
    if (d_output) d_output->data()[i] = static_cast<T>(2.0 * r / static_cast<double>(batch));
  }
  return total / static_cast<double>(batch);
}

#define OTO_INSTANTIATE_LAYERS(T)                                                                  \
  template T activate<T>(const Activation&, T);                                                    \
  template T activate_derivative<T>(const Activation&, T);                                         \
  template BasicTensor<T> linear_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                            const BasicTensor<T>&);                                \
  template BasicTensor<T> linear_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                             const BasicTensor<T>&, std::span<T>, std::span<T>);   \
  template BasicTensor<T> conv_bn_forward<T>(const BasicTensor<T>&, const ConvBNSpec&,             \
                                             const ConvBNWeights<T>&, BasicTensor<T>*);            \
  template BasicTensor<T> conv_bn_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                              const ConvBNSpec&, const ConvBNWeights<T>&,          \
                                              const BasicTensor<T>&, ConvBNGrads<T>);              \
  template BasicTensor<T> attention_forward<T>(const BasicTensor<T>&, const AttentionSpec&,        \
                                               const std::vector<const BasicTensor<T>*>&,          \
                                               const std::vector<const BasicTensor<T>*>&);         \
  template BasicTensor<T> attention_backward<T>(                                                   \
      const BasicTensor<T>&, const AttentionSpec&, const std::vector<const BasicTensor<T>*>&,      \
      const BasicTensor<T>&, const std::vector<std::span<T>>&, const std::vector<std::span<T>>&);  \
  template BasicTensor<T> activation_forward<T>(const BasicTensor<T>&, const Activation&);         \
  template BasicTensor<T> activation_backward<T>(const BasicTensor<T>&, const Activation&,         \
                                                 const BasicTensor<T>&);                           \
  template double softmax_cross_entropy<T>(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                           BasicTensor<T>*);                                       \
  template double mean_squared_error<T>(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>*);

OTO_INSTANTIATE_LAYERS(float)
OTO_INSTANTIATE_LAYERS(double)

#undef OTO_INSTANTIATE_LAYERS

}  // namespace oto
