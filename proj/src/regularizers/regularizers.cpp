#include "oto/regularizers.hpp"

#include <cmath>

#include "oto/error.hpp"

namespace oto {

namespace {

void check_dimension(std::size_t size, const GroupPartition& partition) {
  if (size != partition.dimension()) {
    throw InvalidArgument("vector length " + std::to_string(size) + " does not match partition dimension " +
                          std::to_string(partition.dimension()));
  }
}

}  // namespace

void RegularizerConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw InvalidParameter("lambda must be finite and nonnegative, got " + std::to_string(lambda));
  }
}

double group_norm(std::span<const float> x, std::span<const std::size_t> offsets) {
  double sum = 0.0;
  for (std::size_t o : offsets) sum += double(x[o]) * double(x[o]);
  return std::sqrt(sum);
}

bool group_is_zero(std::span<const float> x, std::span<const std::size_t> offsets) {
  for (std::size_t o : offsets) {
    if (x[o] != 0.0f) return false;
  }
  return true;
}

double group_norm_value(std::span<const float> x, const GroupPartition& partition) {
  check_dimension(x.size(), partition);
  double total = 0.0;
  for (const Group& g : partition.groups()) {
    if (g.penalized) total += group_norm(x, g.offsets);
  }
  return total;
}

std::vector<float> subgradient(std::span<const float> x, const GroupPartition& partition, double lambda) {
  check_dimension(x.size(), partition);
  if (lambda < 0.0) throw InvalidParameter("lambda must be nonnegative");
  std::vector<float> out(x.size(), 0.0f);
  for (const Group& g : partition.groups()) {
    if (!g.penalized) continue;
    const double norm = group_norm(x, g.offsets);
    if (norm == 0.0) continue;
    for (std::size_t o : g.offsets) out[o] = static_cast<float>(lambda * double(x[o]) / norm);
  }
  return out;
}

std::vector<float> group_prox(std::span<const float> v, const GroupPartition& partition, double tau) {
  check_dimension(v.size(), partition);
  if (!(tau >= 0.0)) throw InvalidParameter("prox threshold must be nonnegative");
  std::vector<float> out(v.begin(), v.end());
  for (const Group& g : partition.groups()) {
    if (!g.penalized) continue;
    const double norm = group_norm(v, g.offsets);
    if (norm <= tau) {
      for (std::size_t o : g.offsets) out[o] = 0.0f;
      continue;
    }
    const double scale = 1.0 - tau / norm;
    for (std::size_t o : g.offsets) out[o] = static_cast<float>(double(v[o]) * scale);
  }
  return out;
}

SparsityMetrics sparsity_metrics(std::span<const float> x, const GroupPartition& partition) {
  check_dimension(x.size(), partition);
  SparsityMetrics m;
  for (const Group& g : partition.groups()) {
    if (!g.penalized) continue;
    if (group_is_zero(x, g.offsets)) {
      ++m.zero_groups;
    } else {
      ++m.nonzero_groups;
    }
  }
  const std::size_t total = m.zero_groups + m.nonzero_groups;
  m.ratio = total == 0 ? 0.0 : double(m.zero_groups) / double(total);
  return m;
}

}  // namespace oto
