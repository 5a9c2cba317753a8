#include "oto/optimizers.hpp"

#include <cmath>

#include "oto/error.hpp"
#include "oto/regularizers.hpp"

namespace oto {

namespace {

double dot(std::span<const float> a, std::span<const float> b, std::span<const std::size_t> offsets) {
  double sum = 0.0;
  for (std::size_t o : offsets) sum += double(a[o]) * double(b[o]);
  return sum;
}

void check_finite(std::span<const float> v, std::size_t k, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalFailure(std::string("non-finite ") + what + " entry " + std::to_string(i), k);
    }
  }
}

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                          std::to_string(want));
  }
}

void advance(OptimizerState& state) {
  ++state.k;
  state.alpha = state.schedule.alpha_at(state.k);
}

}  // namespace

double StepSchedule::alpha_at(std::size_t k) const {
  const std::size_t per_epoch = iterations_per_epoch == 0 ? 1 : iterations_per_epoch;
  return alpha0 * std::pow(decay, double(k / per_epoch));
}

OptimizerState OptimizerState::create(std::vector<float> x0, StepSchedule schedule, double lambda,
                                      double epsilon, std::size_t switch_iteration, std::uint64_t seed) {
  OptimizerState s;
  s.x = std::move(x0);
  s.schedule = schedule;
  s.alpha = schedule.alpha_at(0);
  s.lambda = lambda;
  s.epsilon = epsilon;
  s.switch_iteration = switch_iteration;
  s.seed = seed;
  s.validate();
  return s;
}

void OptimizerState::validate() const {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw InvalidParameter("epsilon must lie in [0, 1), got " + std::to_string(epsilon));
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidParameter("step size must be positive, got " + std::to_string(alpha));
  }
  if (switch_iteration == 0) throw InvalidParameter("switch iteration must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidParameter("lambda must be nonnegative, got " + std::to_string(lambda));
  }
  if (!(schedule.decay > 0.0)) throw InvalidParameter("step decay must be positive");
}

StepAudit& StepAudit::operator+=(const StepAudit& o) {
  steps += o.steps;
  projection_steps += o.projection_steps;
  projected_groups += o.projected_groups;
  kept_violations += o.kept_violations;
  descent_violations += o.descent_violations;
  monotone_violations += o.monotone_violations;
  return *this;
}

std::string to_string(Stage stage) {
  return stage == Stage::Initialization ? "initialization" : "group-sparsity";
}

IndexSets compute_index_sets(std::span<const float> x, const GroupPartition& partition) {
  check_length(x.size(), partition.dimension(), "iterate");
  IndexSets sets;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (!partition.penalized(g)) continue;
    (group_is_zero(x, partition.offsets(g)) ? sets.zero : sets.nonzero).push_back(g);
  }
  return sets;
}

std::vector<float> half_space_project(std::span<const float> z, std::span<const float> x_k,
                                      const GroupPartition& partition, double epsilon) {
  check_length(z.size(), partition.dimension(), "trial iterate");
  check_length(x_k.size(), partition.dimension(), "iterate");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidParameter("epsilon must lie in [0, 1)");
  std::vector<float> out(z.begin(), z.end());
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (!partition.penalized(g)) continue;
    const auto offs = partition.offsets(g);
    if (group_is_zero(x_k, offs)) continue;
    const double norm = group_norm(x_k, offs);
    if (dot(z, x_k, offs) < epsilon * norm * norm) {
      for (std::size_t o : offs) out[o] = 0.0f;
    }
  }
  return out;
}

std::vector<float> hspg_direction(std::span<const float> x, std::span<const float> grad,
                                  const GroupPartition& partition, double lambda) {
  check_length(grad.size(), x.size(), "gradient");
  std::vector<float> nu = subgradient(x, partition, lambda);
  for (std::size_t i = 0; i < nu.size(); ++i) nu[i] += grad[i];
  return nu;
}

Stage hspg_step(OptimizerState& state, std::span<const float> nu, const GroupPartition& partition,
                StepAudit* audit) {
  check_length(state.x.size(), partition.dimension(), "iterate");
  check_length(nu.size(), state.x.size(), "subgradient");
  check_finite(nu, state.k, "subgradient");
  const float alpha = static_cast<float>(state.alpha);
  std::vector<float>& x = state.x;

  if (state.k < state.switch_iteration) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= alpha * nu[i];
    if (audit) ++audit->steps;
    advance(state);
    return Stage::Initialization;
  }

  // Trial iterate: a plain step everywhere except groups already zero.
  const IndexSets sets = compute_index_sets(x, partition);
  std::vector<float> trial(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - alpha * nu[i];
  for (std::size_t g : sets.zero) {
    for (std::size_t o : partition.offsets(g)) trial[o] = 0.0f;
  }
  std::vector<float> next = half_space_project(trial, x, partition, state.epsilon);

  if (audit) {
    ++audit->steps;
    ++audit->projection_steps;
    for (std::size_t g : sets.zero) {
      if (!group_is_zero(next, partition.offsets(g))) ++audit->monotone_violations;
    }
    for (std::size_t g : sets.nonzero) {
      const auto offs = partition.offsets(g);
      const double norm_sq = dot(x, x, offs);
      const bool projected = group_is_zero(next, offs) && !group_is_zero(trial, offs);
      if (projected) {
        ++audit->projected_groups;
        if (!(dot(x, nu, offs) > (1.0 - state.epsilon) * norm_sq / state.alpha)) ++audit->descent_violations;
      } else if (!group_is_zero(next, offs) && dot(next, x, offs) < state.epsilon * norm_sq) {
        ++audit->kept_violations;
      }
    }
  }
  x = std::move(next);
  advance(state);
  return Stage::GroupSparsity;
}

void prox_sg_step(OptimizerState& state, std::span<const float> grad, const GroupPartition& partition) {
  check_length(state.x.size(), partition.dimension(), "iterate");
  check_length(grad.size(), state.x.size(), "gradient");
  check_finite(grad, state.k, "gradient");
  const float alpha = static_cast<float>(state.alpha);
  std::vector<float> v(state.x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = state.x[i] - alpha * grad[i];
  state.x = group_prox(v, partition, state.alpha * state.lambda);
  advance(state);
}

void sgd_step(OptimizerState& state, std::span<const float> direction) {
  check_length(direction.size(), state.x.size(), "direction");
  check_finite(direction, state.k, "gradient");
  const float alpha = static_cast<float>(state.alpha);
  for (std::size_t i = 0; i < state.x.size(); ++i) state.x[i] -= alpha * direction[i];
  advance(state);
}

}  // namespace oto
