#pragma once

#include <cstddef>

#include "oto/model.hpp"

namespace oto {

struct GradCheckResult {
  // max over checked scalars of |autodiff - fd| / (|fd| + 1e-8)
  double max_relative_deviation = 0.0;
  std::size_t checked = 0;
  // Scalars whose +-h perturbation flips a ReLU-family sign; the central
  // difference is not a derivative estimate there.
  std::size_t skipped_nonsmooth = 0;
};

/// Compares backward() against central differences of the batch loss.
///
/// Both sides run on a double-precision copy of the model so that the
/// comparison measures the backward algorithm rather than float32 rounding.
GradCheckResult finite_difference_check(const ModelGraph& model, const Tensor& inputs,
                                        const Tensor& targets, double h);

}  // namespace oto
