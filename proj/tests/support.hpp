// Shared helpers for the test executables: seeded random architectures and
// random tensors.
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "oto/model.hpp"
#include "oto/partition.hpp"

namespace oto::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (float& v : t.data()) v = static_cast<float>(normal(rng));
  return t;
}

inline Tensor batch_of(std::size_t batch, const Shape& sample, std::mt19937_64& rng) {
  Shape shape{batch};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return random_tensor(shape, rng);
}

inline Tensor random_labels(std::size_t batch, std::size_t classes, std::mt19937_64& rng) {
  Tensor t({batch});
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  for (float& v : t.data()) v = static_cast<float>(pick(rng));
  return t;
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Activation random_activation(std::mt19937_64& rng) {
  switch (uniform(rng, 0, 3)) {
    case 0: return Activation::relu();
    case 1: return Activation::leaky_relu();
    case 2: return Activation::prelu();
    default: return Activation::gelu();
  }
}

// ConvBN -> ResidualBlock -> flatten -> MultiHeadAttention -> activation ->
// Linear hidden -> activation -> Linear head, all widths random. Every
// supported ZIG structure appears in every model.
inline ModelGraph random_full_model(std::mt19937_64& rng) {
  const std::size_t c = uniform(rng, 1, 3);
  const std::size_t h = uniform(rng, 4, 6);
  const std::size_t w = uniform(rng, 4, 6);
  ModelBuilder b({c, h, w}, rng());
  const std::size_t k1 = uniform(rng, 0, 1) ? 3 : 1;
  b.conv_bn(uniform(rng, 2, 5), k1, 1, k1 == 3 ? uniform(rng, 0, 1) : 0, random_activation(rng));
  const std::size_t k2 = uniform(rng, 0, 1) ? 3 : 1;
  b.residual(uniform(rng, 2, 4), k2, uniform(rng, 1, 2), k2 == 3 ? 1 : 0, random_activation(rng));
  b.flatten();
  std::vector<std::size_t> heads(uniform(rng, 1, 3));
  for (auto& r : heads) r = uniform(rng, 2, 5);
  b.attention(heads);
  b.activation(random_activation(rng));
  b.linear(uniform(rng, 3, 6));
  b.activation(random_activation(rng));
  b.linear(uniform(rng, 2, 4));
  return b.build();
}

// Random dense stack of Linear / attention layers on a vector input.
inline ModelGraph random_dense_model(std::mt19937_64& rng) {
  ModelBuilder b({uniform(rng, 3, 8)}, rng());
  const std::size_t depth = uniform(rng, 1, 3);
  for (std::size_t i = 0; i < depth; ++i) {
    if (uniform(rng, 0, 2) == 0) {
      std::vector<std::size_t> heads(uniform(rng, 1, 3));
      for (auto& r : heads) r = uniform(rng, 2, 4);
      b.attention(heads);
    } else {
      b.linear(uniform(rng, 2, 7));
    }
    b.activation(random_activation(rng));
  }
  b.linear(uniform(rng, 2, 4));
  return b.build();
}

inline ModelGraph random_model(std::mt19937_64& rng) {
  return uniform(rng, 0, 1) ? random_full_model(rng) : random_dense_model(rng);
}

// Random subset of the penalized groups that leaves at least one group alive
// in every layer / head.
inline std::vector<std::size_t> random_prunable_subset(const GroupPartition& p, std::mt19937_64& rng,
                                                       double fraction) {
  std::bernoulli_distribution pick(fraction);
  std::vector<std::size_t> chosen;
  // Keep the first group of every (layer, head) alive.
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t g = 0; g < p.size(); ++g) {
    if (!p.penalized(g)) continue;
    const auto key = std::make_pair(p.group(g).tag.layer, p.group(g).tag.head);
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      seen.push_back(key);
      continue;
    }
    if (pick(rng)) chosen.push_back(g);
  }
  return chosen;
}

}  // namespace oto::testing
