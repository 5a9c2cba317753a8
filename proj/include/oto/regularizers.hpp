#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oto/partition.hpp"

namespace oto {

struct RegularizerConfig {
  double lambda = 0.0;

  // Throws InvalidParameter unless lambda is finite and >= 0.
  void validate() const;
};

// Euclidean norm of one group, accumulated in double.
double group_norm(std::span<const float> x, std::span<const std::size_t> offsets);

// True when every entry of the group is exactly 0.0 (-0.0 included).
bool group_is_zero(std::span<const float> x, std::span<const std::size_t> offsets);

/// r(x) = sum over penalized groups of ||x_g||_2.
double group_norm_value(std::span<const float> x, const GroupPartition& partition);

/// lambda * zeta(x): x_g / ||x_g|| on nonzero penalized groups, 0 on zero
/// groups and on entries outside penalized groups.
std::vector<float> subgradient(std::span<const float> x, const GroupPartition& partition, double lambda);

/// Group soft-thresholding over penalized groups; other entries pass through.
std::vector<float> group_prox(std::span<const float> v, const GroupPartition& partition, double tau);

struct SparsityMetrics {
  double ratio = 0.0;  // zero penalized groups / penalized groups (0 when none)
  std::size_t zero_groups = 0;
  std::size_t nonzero_groups = 0;
};

SparsityMetrics sparsity_metrics(std::span<const float> x, const GroupPartition& partition);

}  // namespace oto
