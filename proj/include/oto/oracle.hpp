#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oto/dataset.hpp"
#include "oto/partition.hpp"

namespace oto {

struct BcdResult {
  std::vector<double> x;
  double objective = 0.0;  // (1/N)||Ax - y||^2 + lambda sum_g ||x_g||
  std::size_t sweeps = 0;
};

/// Group lasso by block coordinate descent, in double precision and
/// independent of the optimizer module. Each block update is a proximal
/// gradient step on group g with step 1/L_g, L_g = 2 lambda_max(A_g^T A_g / N),
/// using the closed-form group soft-threshold. Stops when the largest change
/// of any entry in a sweep is below `tol`; throws OracleFailure otherwise.
/// Unpenalized groups and ungrouped entries are updated without shrinkage.
BcdResult bcd_oracle(const Dataset& data, const GroupPartition& partition, double lambda, double tol,
                     std::size_t max_sweeps, std::span<const double> x0 = {});

// psi(x) for the least-squares group lasso, evaluated in double.
double group_lasso_objective(const Dataset& data, const GroupPartition& partition, double lambda,
                             std::span<const double> x);
double group_lasso_objective(const Dataset& data, const GroupPartition& partition, double lambda,
                             std::span<const float> x);

// Penalized groups whose entries are all exactly zero.
std::vector<std::size_t> zero_group_ids(std::span<const double> x, const GroupPartition& partition);
std::vector<std::size_t> zero_group_ids(std::span<const float> x, const GroupPartition& partition);

}  // namespace oto
