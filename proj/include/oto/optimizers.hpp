#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oto/partition.hpp"

namespace oto {

/// alpha_k = alpha0 * decay^(k / iterations_per_epoch), integer division.
struct StepSchedule {
  double alpha0 = 0.1;
  double decay = 1.0;
  std::size_t iterations_per_epoch = 1;

  double alpha_at(std::size_t k) const;
};

struct OptimizerState {
  std::vector<float> x;
  double alpha = 0.1;
  double epsilon = 0.0;
  std::size_t switch_iteration = 1;  // N_P
  std::size_t k = 0;
  double lambda = 0.0;
  StepSchedule schedule;
  std::uint64_t seed = 0;

  // Starts at iteration 0 with alpha = schedule.alpha_at(0).
  static OptimizerState create(std::vector<float> x0, StepSchedule schedule, double lambda,
                               double epsilon = 0.0, std::size_t switch_iteration = 1,
                               std::uint64_t seed = 0);

  // Throws InvalidParameter on epsilon outside [0, 1), alpha <= 0,
  // switch_iteration == 0 or negative lambda.
  void validate() const;
};

struct IndexSets {
  std::vector<std::size_t> zero;     // penalized groups with every entry exactly 0
  std::vector<std::size_t> nonzero;  // the remaining penalized groups
};

IndexSets compute_index_sets(std::span<const float> x, const GroupPartition& partition);

/// Per penalized group with x_k nonzero: zero the group when
/// z_g . x_g < epsilon ||x_g||^2, otherwise keep z_g. Groups that are zero
/// in x_k, and unpenalized entries, are copied from z unchanged.
std::vector<float> half_space_project(std::span<const float> z, std::span<const float> x_k,
                                      const GroupPartition& partition, double epsilon);

/// Counters for the conditions the group-sparsity stage guarantees; any
/// nonzero *_violations count is a bug.
struct StepAudit {
  std::size_t steps = 0;
  std::size_t projection_steps = 0;
  std::size_t projected_groups = 0;  // groups zeroed by the half-space projection
  std::size_t kept_violations = 0;      // kept group with x_{k+1}.x_k < eps ||x_k||^2
  std::size_t descent_violations = 0;   // zeroed group with x_k.nu <= (1-eps)||x_k||^2/alpha
  std::size_t monotone_violations = 0;  // group zero at k but nonzero at k+1

  StepAudit& operator+=(const StepAudit& other);
  bool clean() const { return kept_violations == 0 && descent_violations == 0 && monotone_violations == 0; }
};

enum class Stage { Initialization, GroupSparsity };

std::string to_string(Stage stage);

/// nu(x) = grad f(x) + lambda zeta(x) restricted to penalized groups.
std::vector<float> hspg_direction(std::span<const float> x, std::span<const float> grad,
                                  const GroupPartition& partition, double lambda);

/// One HSPG iteration with nu = hspg_direction(...). Below the switch
/// iteration this is x - alpha nu; afterwards the trial iterate keeps zero
/// groups at zero and is then half-space projected. Returns the stage the step
/// ran in. A non-finite nu raises NumericalFailure carrying k.
Stage hspg_step(OptimizerState& state, std::span<const float> nu, const GroupPartition& partition,
                StepAudit* audit = nullptr);

/// x <- group_prox(x - alpha grad, alpha lambda).
void prox_sg_step(OptimizerState& state, std::span<const float> grad, const GroupPartition& partition);

/// x <- x - alpha direction.
void sgd_step(OptimizerState& state, std::span<const float> direction);

}  // namespace oto
