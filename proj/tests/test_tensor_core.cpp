#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oto/checkpoint.hpp"
#include "oto/error.hpp"
#include "oto/gradcheck.hpp"
#include "oto/layers.hpp"
#include "oto/model.hpp"
#include "support.hpp"

using namespace oto;
using oto::testing::batch_of;
using oto::testing::random_labels;
using oto::testing::random_tensor;

namespace {

struct ConvArrays {
  Tensor kernel, bias, mean, stddev, gamma, beta;

  ConvBNWeights<float> view() const { return {kernel, bias, mean, stddev, gamma, beta}; }
};

ConvArrays random_conv_arrays(const ConvBNSpec& s, std::mt19937_64& rng) {
  ConvArrays a{random_tensor({s.out_channels, s.row_length()}, rng),
               random_tensor({s.out_channels}, rng),
               random_tensor({s.out_channels}, rng),
               Tensor({s.out_channels}),
               random_tensor({s.out_channels}, rng),
               random_tensor({s.out_channels}, rng)};
  std::uniform_real_distribution<float> pos(0.5f, 2.0f);
  for (float& v : a.stddev.data()) v = pos(rng);
  return a;
}

// Independent nested-loop convolution followed by activation and stored BN.
std::vector<double> conv_bn_oracle(const Tensor& in, const ConvBNSpec& s, const ConvArrays& a) {
  const std::size_t n = in.extent(0), c = in.extent(1), h = in.extent(2), w = in.extent(3);
  const std::size_t oh = (h + 2 * s.padding - s.kernel_h) / s.stride + 1;
  const std::size_t ow = (w + 2 * s.padding - s.kernel_w) / s.stride + 1;
  std::vector<double> out(n * s.out_channels * oh * ow);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t m = 0; m < s.out_channels; ++m)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = a.bias[m];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const long iy = long(y * s.stride + ky) - long(s.padding);
                const long ix = long(x * s.stride + kx) - long(s.padding);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                const double k = a.kernel[m * s.row_length() + (ci * s.kernel_h + ky) * s.kernel_w + kx];
                acc += k * in[((b * c + ci) * h + std::size_t(iy)) * w + std::size_t(ix)];
              }
          const double act = activate(s.activation, acc);
          out[((b * s.out_channels + m) * oh + y) * ow + x] =
              (act - a.mean[m]) / a.stddev[m] * a.gamma[m] + a.beta[m];
        }
  return out;
}

std::vector<double> dense_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t rows = x.size() / x.shape().back();
  const std::size_t n = x.shape().back(), m = w.extent(0);
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < n; ++j) s += double(w[i * n + j]) * x[r * n + j];
      out[r * m + i] = s;
    }
  return out;
}

ConvBNSpec conv_spec(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                     Activation act) {
  ConvBNSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.padding = pad;
  s.activation = act;
  return s;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("tensor invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_FALSE(t.has_grad());
    t.zero_grad();
    CHECK(t.grad().size() == t.size());
    CHECK_THROWS_AS(Tensor({2, 0}), InvalidArgument);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), InvalidArgument);
  }
}

TEST_SUITE("conv_bn_forward") {
  TEST_CASE("zero filter row gives zeros") {
    const ConvBNSpec s = conv_spec(1, 1, 1, 1, 0, Activation::relu());
    const ConvArrays a{Tensor({1, 1}, {0.0f}), Tensor({1}, {0.0f}), Tensor({1}, {0.0f}),
                       Tensor({1}, {1.0f}),    Tensor({1}, {1.0f}), Tensor({1}, {0.0f})};
    const Tensor out = conv_bn_forward(Tensor({1, 1, 1, 1}, {5.0f}), s, a.view());
    CHECK(out[0] == 0.0f);
  }

  TEST_CASE("direct evaluation: a(2*3+1) = 7") {
    const ConvBNSpec s = conv_spec(1, 1, 1, 1, 0, Activation::relu());
    const ConvArrays a{Tensor({1, 1}, {2.0f}), Tensor({1}, {1.0f}), Tensor({1}, {0.0f}),
                       Tensor({1}, {1.0f}),    Tensor({1}, {1.0f}), Tensor({1}, {0.0f})};
    const Tensor out = conv_bn_forward(Tensor({1, 1, 1, 1}, {3.0f}), s, a.view());
    CHECK(out[0] == 7.0f);
  }

  TEST_CASE("activation is applied before normalization") {
    // a(-2) = 0 with ReLU, so the output is (0 - mu)/sigma*gamma + beta = -1.
    const ConvBNSpec s = conv_spec(1, 1, 1, 1, 0, Activation::relu());
    const ConvArrays a{Tensor({1, 1}, {1.0f}), Tensor({1}, {0.0f}), Tensor({1}, {2.0f}),
                       Tensor({1}, {2.0f}),    Tensor({1}, {1.0f}), Tensor({1}, {0.0f})};
    const Tensor out = conv_bn_forward(Tensor({1, 1, 1, 1}, {-2.0f}), s, a.view());
    CHECK(out[0] == -1.0f);
  }

  TEST_CASE("matches nested-loop oracle on random 2x3x4x4 input") {
    std::mt19937_64 rng(11);
    for (auto [k, stride, pad] : {std::tuple{3, 1, 0}, {3, 1, 1}, {3, 2, 1}, {1, 1, 0}}) {
      for (Activation act : {Activation::relu(), Activation::gelu(), Activation::leaky_relu(), Activation::prelu()}) {
        const ConvBNSpec s = conv_spec(3, 2, k, stride, pad, act);
        const ConvArrays a = random_conv_arrays(s, rng);
        const Tensor in = random_tensor({2, 3, 4, 4}, rng);
        const Tensor out = conv_bn_forward(in, s, a.view());
        const auto want = conv_bn_oracle(in, s, a);
        REQUIRE(out.size() == want.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(out[i] - want[i]));
        CHECK(worst <= 1e-6 * 4);  // float32 output rounding of O(1..4) magnitudes
      }
    }
  }

  TEST_CASE("errors") {
    std::mt19937_64 rng(3);
    const ConvBNSpec s = conv_spec(3, 2, 3, 1, 0, Activation::relu());
    ConvArrays a = random_conv_arrays(s, rng);
    const Tensor wrong_channels = random_tensor({1, 2, 4, 4}, rng);
    try {
      conv_bn_forward(wrong_channels, s, a.view());
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("channel") != std::string::npos);
    }
    a.stddev[1] = 0.0f;
    CHECK_THROWS_AS(conv_bn_forward(random_tensor({1, 3, 4, 4}, rng), s, a.view()), InvalidParameter);
    a.stddev[1] = -1.0f;
    CHECK_THROWS_AS(conv_bn_forward(random_tensor({1, 3, 4, 4}, rng), s, a.view()), InvalidParameter);
  }
}

TEST_SUITE("linear_forward") {
  TEST_CASE("identity") {
    const Tensor out = linear_forward(Tensor({1, 2}, {3.0f, -1.0f}), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}));
    CHECK(out[0] == 3.0f);
    CHECK(out[1] == -1.0f);
  }

  TEST_CASE("zero row and bias give exact zero output element") {
    std::mt19937_64 rng(5);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);
    for (std::size_t j = 0; j < 4; ++j) w[1 * 4 + j] = 0.0f;
    b[1] = 0.0f;
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor out = linear_forward(random_tensor({5, 4}, rng, 10.0), w, b);
      for (std::size_t r = 0; r < 5; ++r) CHECK(out[r * 3 + 1] == 0.0f);
    }
  }

  TEST_CASE("matches dot-product oracle, batched over leading axes") {
    std::mt19937_64 rng(7);
    const Tensor w = random_tensor({4, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    for (const Shape& shape : {Shape{3}, Shape{1, 3}, Shape{2, 5, 3}}) {
      const Tensor x = random_tensor(shape, rng);
      const Tensor out = linear_forward(x, w, b);
      const auto want = dense_oracle(x, w, b);
      REQUIRE(out.size() == want.size());
      CHECK(out.shape().back() == 4);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(out[i] - want[i]) <= 1e-6);
    }
  }

  TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(linear_forward(Tensor({1, 2}), Tensor({2, 3}), Tensor({2})), InvalidArgument);
  }
}

TEST_SUITE("attention_forward") {
  AttentionSpec two_heads(std::size_t rows, std::size_t n) {
    AttentionSpec s;
    s.in_features = n;
    s.heads = {{0, 0, rows}, {0, 0, rows}};
    return s;
  }

  TEST_CASE("identity heads concatenate") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor zero({2});
    const Tensor out = attention_forward(Tensor({1, 2}, {1.0f, 2.0f}), two_heads(2, 2), {&eye, &eye}, {&zero, &zero});
    REQUIRE(out.size() == 4);
    CHECK(out[0] == 1.0f);
    CHECK(out[1] == 2.0f);
    CHECK(out[2] == 1.0f);
    CHECK(out[3] == 2.0f);
  }

  TEST_CASE("per-head zero-invariance") {
    std::mt19937_64 rng(9);
    Tensor w1 = random_tensor({3, 4}, rng), w2 = random_tensor({3, 4}, rng);
    Tensor b1 = random_tensor({3}, rng), b2 = random_tensor({3}, rng);
    for (std::size_t j = 0; j < 4; ++j) w1[2 * 4 + j] = 0.0f;
    b1[2] = 0.0f;
    const Tensor x = random_tensor({6, 4}, rng);
    const Tensor out = attention_forward(x, two_heads(3, 4), {&w1, &w2}, {&b1, &b2});
    const auto head2 = dense_oracle(x, w2, b2);
    for (std::size_t r = 0; r < 6; ++r) {
      CHECK(out[r * 6 + 2] == 0.0f);
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out[r * 6 + 3 + i] - head2[r * 3 + i]) <= 1e-6);
    }
  }

  TEST_CASE("matches per-head matmul oracle") {
    std::mt19937_64 rng(10);
    AttentionSpec s;
    s.in_features = 5;
    s.heads = {{0, 0, 3}, {0, 0, 2}};
    const Tensor w1 = random_tensor({3, 5}, rng), w2 = random_tensor({2, 5}, rng);
    const Tensor b1 = random_tensor({3}, rng), b2 = random_tensor({2}, rng);
    const Tensor x = random_tensor({4, 5}, rng);
    const Tensor out = attention_forward(x, s, {&w1, &w2}, {&b1, &b2});
    const auto o1 = dense_oracle(x, w1, b1), o2 = dense_oracle(x, w2, b2);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out[r * 5 + i] - o1[r * 3 + i]) <= 1e-6);
      for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(out[r * 5 + 3 + i] - o2[r * 2 + i]) <= 1e-6);
    }
  }

  TEST_CASE("head extents inconsistent with declared rows") {
    AttentionSpec s = two_heads(2, 2);
    const Tensor w({3, 2});
    const Tensor b({3});
    CHECK_THROWS_AS(attention_forward(Tensor({1, 2}), s, {&w, &w}, {&b, &b}), InvalidArgument);
  }
}

TEST_SUITE("activations") {
  TEST_CASE("every kind is exactly zero at zero") {
    for (Activation act : {Activation::identity(), Activation::relu(), Activation::leaky_relu(),
                           Activation::prelu(), Activation::gelu(), Activation::leaky_relu(0.3)}) {
      CHECK(activate(act, 0.0f) == 0.0f);
      CHECK(activate(act, 0.0) == 0.0);
      CHECK(activate(act, -0.0f) == 0.0f);
    }
  }
}

TEST_SUITE("model_forward") {
  TEST_CASE("empty model is the identity") {
    ModelGraph m({3});
    std::mt19937_64 rng(1);
    const Tensor x = batch_of(4, {3}, rng);
    CHECK(m.forward(x).output == x);
  }

  TEST_CASE("zeroed ConvBN group gives a zero output channel") {
    ModelGraph m = ModelBuilder({2, 5, 5}, 3).conv_bn(3, 3, 1, 1, Activation::gelu()).build();
    const auto& spec = std::get<ConvBNSpec>(m.layers()[0]);
    std::mt19937_64 rng(4);
    for (ArrayId id : {spec.mean, spec.gamma, spec.beta, spec.bias}) {
      for (float& v : m.array(id).value.data()) v = float(rng() % 7) - 3.0f;
    }
    for (std::size_t j = 0; j < spec.row_length(); ++j) m.array(spec.kernel).value[1 * spec.row_length() + j] = 0.0f;
    for (ArrayId id : {spec.bias, spec.gamma, spec.beta}) m.array(id).value[1] = 0.0f;
    const Tensor out = m.forward(batch_of(3, {2, 5, 5}, rng)).output;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t p = 0; p < 25; ++p) CHECK(out[(b * 3 + 1) * 25 + p] == 0.0f);
  }

  TEST_CASE("3-layer MLP matches composition of oracles") {
    std::mt19937_64 rng(12);
    ModelGraph m = ModelBuilder({5}, 8).linear(7).activation(Activation::relu()).linear(6)
                       .activation(Activation::gelu()).linear(3).build();
    const Tensor x = batch_of(4, {5}, rng);
    const Tensor out = m.forward(x).output;
    auto lin = [&](std::size_t layer, const std::vector<double>& in, std::size_t n) {
      const auto& s = std::get<LinearSpec>(m.layers()[layer]);
      const Tensor& w = m.array(s.weight).value;
      const Tensor& b = m.array(s.bias).value;
      std::vector<double> o(4 * s.out_features);
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t i = 0; i < s.out_features; ++i) {
          double acc = b[i];
          for (std::size_t j = 0; j < n; ++j) acc += double(w[i * n + j]) * in[r * n + j];
          o[r * s.out_features + i] = acc;
        }
      return o;
    };
    std::vector<double> h(x.data().begin(), x.data().end());
    h = lin(0, h, 5);
    for (double& v : h) v = std::max(v, 0.0);
    h = lin(2, h, 7);
    for (double& v : h) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    h = lin(4, h, 6);
    REQUIRE(out.size() == h.size());
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(out[i] - h[i]) <= 1e-5);
  }

  TEST_CASE("forward is bitwise deterministic") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 5; ++t) {
      ModelGraph m = oto::testing::random_full_model(rng);
      const Tensor x = batch_of(3, m.sample_shape(), rng);
      const Tensor a = m.forward(x).output;
      const Tensor b = m.forward(x).output;
      CHECK(a == b);
    }
  }

  TEST_CASE("residual block equals the sum of its branches") {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 10; ++t) {
      ModelGraph m = ModelBuilder({2, 5, 5}, rng()).residual(3, 3, 1 + t % 2, 1, oto::testing::random_activation(rng)).build();
      oto::randomize_parameters(m, rng());
      const auto& r = std::get<ResidualSpec>(m.layers()[0]);
      const Tensor x = batch_of(2, {2, 5, 5}, rng);
      auto branch = [&](const ConvBNSpec& c) {
        return conv_bn_forward(x, c, ConvBNWeights<float>{m.array(c.kernel).value, m.array(c.bias).value,
                                                          m.array(c.mean).value, m.array(c.stddev).value,
                                                          m.array(c.gamma).value, m.array(c.beta).value});
      };
      const Tensor a = branch(r.first), b = branch(r.second);
      const Tensor out = m.forward(x).output;
      for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(double(out[i]) - (double(a[i]) + b[i])) <= 1e-6);
    }
  }

  TEST_CASE("layer errors carry the layer index") {
    ModelGraph m = ModelBuilder({2, 4, 4}, 1).conv_bn(2, 3).build();
    m.array(std::get<ConvBNSpec>(m.layers()[0]).stddev).value[0] = -1.0f;
    std::mt19937_64 rng(1);
    try {
      m.forward(batch_of(1, {2, 4, 4}, rng));
      FAIL("expected an error");
    } catch (const InvalidParameter& e) {
      CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
    CHECK_THROWS_AS(m.forward(batch_of(1, {3, 4, 4}, rng)), InvalidArgument);
  }

  TEST_CASE("incompatible adjacent layers are rejected") {
    ModelGraph m({4});
    m.add_array("w", Tensor({2, 3}), true);
    m.add_array("b", Tensor({2}), true);
    CHECK_THROWS_AS(m.add_layer(LinearSpec{0, 1, 3, 2}), InvalidModel);
  }
}

TEST_SUITE("model_backward") {
  TEST_CASE("linear + MSE matches closed form 2(Wx+b-y)x^T") {
    std::mt19937_64 rng(20);
    ModelGraph m = ModelBuilder({3}, 2).linear(2).loss(LossKind::MeanSquaredError).build();
    const auto& s = std::get<LinearSpec>(m.layers()[0]);
    const Tensor x = batch_of(1, {3}, rng);
    const Tensor y = random_tensor({1, 2}, rng);
    m.forward(x, &y);
    m.backward();
    const Tensor& w = m.array(s.weight).value;
    const Tensor& b = m.array(s.bias).value;
    for (std::size_t i = 0; i < 2; ++i) {
      double r = b[i] - y[i];
      for (std::size_t j = 0; j < 3; ++j) r += double(w[i * 3 + j]) * x[j];
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(m.array(s.weight).value.grad()[i * 3 + j] - 2 * r * x[j]) <= 1e-5);
      CHECK(std::abs(m.array(s.bias).value.grad()[i] - 2 * r) <= 1e-5);
    }
  }

  TEST_CASE("constant-output model has zero gradient") {
    // A zero first layer feeds constant zeros upstream, so the downstream
    // weight gradients vanish; ReLU of 0 kills the first layer's gradient.
    ModelGraph m = ModelBuilder({3}, 4).linear(4).activation(Activation::relu()).linear(2).build();
    const auto& first = std::get<LinearSpec>(m.layers()[0]);
    m.array(first.weight).value.fill(0.0f);
    m.array(first.bias).value.fill(0.0f);
    const auto& last = std::get<LinearSpec>(m.layers()[2]);
    m.array(last.bias).value.fill(0.0f);
    std::mt19937_64 rng(2);
    const Tensor x = batch_of(5, {3}, rng);
    const Tensor y = random_labels(5, 2, rng);
    m.forward(x, &y);
    m.backward();
    for (float g : m.array(first.weight).value.grad()) CHECK(g == 0.0f);
    for (float g : m.array(last.weight).value.grad()) CHECK(g == 0.0f);
  }

  TEST_CASE("backward before forward is a state error") {
    ModelGraph m = ModelBuilder({3}, 4).linear(2).build();
    CHECK_THROWS_AS(m.backward(), StateError);
    ModelGraph empty({3});
    CHECK_THROWS_AS(empty.backward(), StateError);
    std::mt19937_64 rng(2);
    m.forward(batch_of(2, {3}, rng));  // no targets
    CHECK_THROWS_AS(m.backward(), StateError);
  }

  TEST_CASE("backward is deterministic") {
    std::mt19937_64 rng(21);
    ModelGraph m = oto::testing::random_full_model(rng);
    const Tensor x = batch_of(3, m.sample_shape(), rng);
    const Tensor y = random_labels(3, m.output_shape().back(), rng);
    m.forward(x, &y);
    m.backward();
    const auto g1 = m.flat_gradients();
    m.forward(x, &y);
    m.backward();
    CHECK(g1 == m.flat_gradients());
  }
}

TEST_SUITE("finite_difference_check") {
  TEST_CASE("linear model") {
    std::mt19937_64 rng(30);
    ModelGraph m = ModelBuilder({4}, 1).linear(3).build();
    const auto r = finite_difference_check(m, batch_of(5, {4}, rng), random_labels(5, 3, rng), 1e-3);
    CHECK(r.checked == m.parameter_count());
    CHECK(r.max_relative_deviation <= 1e-3);
  }

  TEST_CASE("zero-parameter model") {
    ModelGraph m = ModelBuilder({4}, 1).activation(Activation::relu()).build();
    std::mt19937_64 rng(31);
    const auto r = finite_difference_check(m, batch_of(2, {4}, rng), random_labels(2, 4, rng), 1e-3);
    CHECK(r.max_relative_deviation == 0.0);
    CHECK(r.checked == 0);
  }

  TEST_CASE("ConvBN + Linear model") {
    std::mt19937_64 rng(32);
    ModelGraph m = ModelBuilder({2, 4, 4}, 5).conv_bn(3, 3, 1, 1, Activation::gelu()).flatten().linear(3).build();
    oto::randomize_parameters(m, rng(), 0.5);
    const auto r = finite_difference_check(m, batch_of(3, {2, 4, 4}, rng), random_labels(3, 3, rng), 1e-3);
    CHECK(r.checked == m.parameter_count());
    CHECK(r.max_relative_deviation <= 1e-3);
  }

  TEST_CASE("toy CNN with all layer kinds") {
    std::mt19937_64 rng(33);
    ModelGraph m = ModelBuilder({1, 5, 5}, 6)
                       .conv_bn(3, 3, 1, 1, Activation::leaky_relu())
                       .residual(3, 3, 1, 1, Activation::relu())
                       .flatten()
                       .attention({4, 3})
                       .activation(Activation::prelu())
                       .linear(3)
                       .build();
    const auto r = finite_difference_check(m, batch_of(4, {1, 5, 5}, rng), random_labels(4, 3, rng), 1e-3);
    CHECK(r.checked + r.skipped_nonsmooth == m.parameter_count());
    CHECK(r.checked > m.parameter_count() / 2);
    CHECK(r.max_relative_deviation <= 1e-3);
  }

  TEST_CASE("step must be positive") {
    ModelGraph m = ModelBuilder({2}, 1).linear(2).build();
    CHECK_THROWS_AS(finite_difference_check(m, Tensor({1, 2}), Tensor({1}), 0.0), InvalidArgument);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip reproduces every array bitwise") {
    std::mt19937_64 rng(40);
    ModelGraph m = oto::testing::random_full_model(rng);
    oto::randomize_parameters(m, 5);
    std::stringstream buf;
    write_checkpoint(buf, m.arrays());
    const auto arrays = read_checkpoint(buf);
    const ModelGraph back = rebuild_with_arrays(m, arrays);
    REQUIRE(back.arrays().size() == m.arrays().size());
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      CHECK(back.arrays()[i].name == m.arrays()[i].name);
      CHECK(back.arrays()[i].value == m.arrays()[i].value);
      CHECK(back.arrays()[i].trainable == m.arrays()[i].trainable);
    }
  }

  TEST_CASE("byte layout") {
    std::stringstream buf;
    write_checkpoint(buf, {{"ab", Tensor({2}, {1.0f, -2.0f}), true}});
    const std::string s = buf.str();
    REQUIRE(s.size() == 8 + 4 + 4 + 2 + 4 + 4 + 8);
    CHECK(s.substr(0, 8) == "OTOCKPT1");
    CHECK(s[8] == 1);
    CHECK(s[12] == 2);
    CHECK(s.substr(16, 2) == "ab");
    CHECK(s[18] == 1);   // rank
    CHECK(s[22] == 2);   // extent
    // 1.0f = 0x3f800000 little-endian
    CHECK(static_cast<unsigned char>(s[29]) == 0x3f);
    CHECK(static_cast<unsigned char>(s[28]) == 0x80);
  }

  TEST_CASE("truncation and bad magic report byte offsets") {
    std::stringstream buf;
    write_checkpoint(buf, {{"w", Tensor({3}, {1, 2, 3}), true}});
    const std::string full = buf.str();
    std::stringstream cut(full.substr(0, full.size() - 2));
    try {
      read_checkpoint(cut);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == full.size() - 2);
    }
    std::stringstream bad("NOTACKPT\x01\x00\x00\x00");
    CHECK_THROWS_AS(read_checkpoint(bad), FormatError);
  }
}
