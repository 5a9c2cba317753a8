#include "oto/gradcheck.hpp"

#include <cmath>

#include "oto/error.hpp"

namespace oto {

GradCheckResult finite_difference_check(const ModelGraph& model, const Tensor& inputs,
                                        const Tensor& targets, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite difference step must be positive");
  BasicModel<double> m = model.cast<double>();
  const BasicTensor<double> x = inputs.cast<double>();
  const BasicTensor<double> y = targets.cast<double>();

  GradCheckResult result;
  if (m.parameter_count() == 0) return result;

  m.forward(x, &y);
  const std::vector<bool> base_pattern = m.activation_pattern();
  m.backward();
  const std::vector<double> analytic = m.flat_gradients();
  std::vector<double> params = m.flat_parameters();

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    m.set_flat_parameters(params);
    const double plus = *m.forward(x, &y).loss;
    const bool plus_smooth = m.activation_pattern() == base_pattern;
    params[i] = saved - h;
    m.set_flat_parameters(params);
    const double minus = *m.forward(x, &y).loss;
    const bool minus_smooth = m.activation_pattern() == base_pattern;
    params[i] = saved;
    if (!plus_smooth || !minus_smooth) {
      ++result.skipped_nonsmooth;
      continue;
    }
    const double fd = (plus - minus) / (2.0 * h);
    const double dev = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
    result.max_relative_deviation = std::max(result.max_relative_deviation, dev);
    ++result.checked;
  }
  return result;
}

}  // namespace oto
