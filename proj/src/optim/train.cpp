#include "oto/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "oto/error.hpp"
#include "oto/regularizers.hpp"

namespace oto {

LeastSquaresObjective::LeastSquaresObjective(const Dataset& data) {
  data.validate();
  rows_ = data.sample_count();
  if (rows_ == 0) throw InvalidArgument("least-squares objective needs at least one sample");
  cols_ = data.inputs.size() / rows_;
  if (data.targets.size() != rows_) {
    throw InvalidArgument("least-squares objective needs one scalar target per sample");
  }
  a_.assign(data.inputs.data().begin(), data.inputs.data().end());
  y_.assign(data.targets.data().begin(), data.targets.data().end());
}

double LeastSquaresObjective::loss(std::span<const float> x) {
  if (x.size() != cols_) throw InvalidArgument("parameter length does not match design matrix columns");
  double total = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) {
    double r = -double(y_[i]);
    for (std::size_t j = 0; j < cols_; ++j) r += double(a_[i * cols_ + j]) * double(x[j]);
    total += r * r;
  }
  return total / double(rows_);
}

double LeastSquaresObjective::batch_gradient(std::span<const float> x, std::span<const std::size_t> batch,
                                             std::span<float> grad) {
  if (x.size() != cols_ || grad.size() != cols_) {
    throw InvalidArgument("parameter length does not match design matrix columns");
  }
  if (batch.empty()) throw InvalidArgument("empty batch");
  std::vector<double> acc(cols_, 0.0);
  double total = 0.0;
  for (std::size_t i : batch) {
    const float* row = &a_.at(i * cols_);
    double r = -double(y_[i]);
    for (std::size_t j = 0; j < cols_; ++j) r += double(row[j]) * double(x[j]);
    total += r * r;
    for (std::size_t j = 0; j < cols_; ++j) acc[j] += 2.0 * r * double(row[j]);
  }
  const double inv = 1.0 / double(batch.size());
  for (std::size_t j = 0; j < cols_; ++j) grad[j] = static_cast<float>(acc[j] * inv);
  return total * inv;
}

ModelObjective::ModelObjective(const ModelGraph& model, const Dataset& data, std::size_t eval_batch)
    : model_(model), data_(data), eval_batch_(eval_batch == 0 ? 1 : eval_batch) {
  data_.validate();
  if (data_.sample_count() == 0) throw InvalidArgument("dataset is empty");
  if (data_.sample_shape() != model_.sample_shape()) {
    throw InvalidArgument("dataset sample shape " + shape_to_string(data_.sample_shape()) +
                          " does not match model input " + shape_to_string(model_.sample_shape()));
  }
}

double ModelObjective::loss(std::span<const float> x) {
  model_.set_flat_parameters(x);
  const std::size_t n = data_.sample_count();
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += eval_batch_) {
    const std::size_t end = std::min(n, start + eval_batch_);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto [in, tg] = data_.gather(idx);
    total += *model_.forward(in, &tg).loss * double(end - start);
  }
  model_.clear_forward_state();
  return total / double(n);
}

double ModelObjective::batch_gradient(std::span<const float> x, std::span<const std::size_t> batch,
                                      std::span<float> grad) {
  if (grad.size() != model_.parameter_count()) throw InvalidArgument("gradient buffer has wrong length");
  model_.set_flat_parameters(x);
  auto [in, tg] = data_.gather(batch);
  const double value = *model_.forward(in, &tg).loss;
  model_.backward();
  const std::vector<float> g = model_.flat_gradients();
  std::copy(g.begin(), g.end(), grad.begin());
  return value;
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::HSPG: return "hspg";
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::ProxSG: return "prox-sg";
  }
  return "unknown";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "hspg") return OptimizerKind::HSPG;
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "prox-sg" || name == "proxsg") return OptimizerKind::ProxSG;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected hspg, sgd or prox-sg)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidParameter("batch size must be positive");
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw InvalidParameter("alpha0 must be positive");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw InvalidParameter("decay must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be nonnegative");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidParameter("epsilon must lie in [0, 1)");
}

std::string to_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss"] = m.loss;
  j["objective"] = m.objective;
  j["group_sparsity"] = m.group_sparsity;
  j["zero_groups"] = m.zero_groups;
  j["alpha"] = m.alpha;
  j["stage"] = m.stage;
  return j.dump();
}

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

TrainResult train(Objective& objective, std::vector<float> x0, const GroupPartition& partition,
                  const TrainConfig& config) {
  config.validate();
  const std::size_t n = objective.sample_count();
  if (x0.size() != objective.dimension() || partition.dimension() != objective.dimension()) {
    throw InvalidArgument("initial point, partition and objective dimensions disagree");
  }
  const std::size_t per_epoch = steps_per_epoch(n, config.batch_size);
  const std::size_t switch_iteration = std::max<std::size_t>(1, config.switch_epochs * per_epoch);
  OptimizerState state = OptimizerState::create(std::move(x0), {config.alpha0, config.decay, per_epoch},
                                                config.lambda, config.epsilon, switch_iteration, config.seed);

  TrainResult result;
  result.switch_iteration = switch_iteration;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> grad(state.x.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::string stage;
    double last_alpha = state.alpha;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(config.batch_size, n - start));
      last_alpha = state.alpha;
      try {
        objective.batch_gradient(state.x, batch, grad);
        switch (config.optimizer) {
          case OptimizerKind::HSPG: {
            const auto nu = hspg_direction(state.x, grad, partition, config.lambda);
            stage = to_string(hspg_step(state, nu, partition, &result.audit));
            break;
          }
          case OptimizerKind::SGD: {
            if (config.lambda > 0.0) {
              sgd_step(state, hspg_direction(state.x, grad, partition, config.lambda));
            } else {
              sgd_step(state, grad);
            }
            stage = "sgd";
            break;
          }
          case OptimizerKind::ProxSG:
            prox_sg_step(state, grad, partition);
            stage = "prox-sg";
            break;
        }
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")", e.iteration());
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = objective.loss(state.x);
    m.objective = m.loss + config.lambda * group_norm_value(state.x, partition);
    const SparsityMetrics s = sparsity_metrics(state.x, partition);
    m.group_sparsity = s.ratio;
    m.zero_groups = s.zero_groups;
    m.alpha = last_alpha;
    m.stage = stage;
    if (!std::isfinite(m.loss)) throw NumericalFailure("loss became non-finite", state.k);
    result.trace.push_back(std::move(m));
  }
  result.iterations = state.k;
  result.x = std::move(state.x);
  return result;
}

TrainResult train(ModelGraph& model, const GroupPartition& partition, const Dataset& data,
                  const TrainConfig& config) {
  ModelObjective objective(model, data);
  TrainResult result = train(objective, model.flat_parameters(), partition, config);
  model.set_flat_parameters(result.x);
  return result;
}

double accuracy(ModelGraph& model, const Dataset& data, std::size_t eval_batch) {
  const std::size_t n = data.sample_count();
  if (n == 0) return 0.0;
  eval_batch = std::max<std::size_t>(1, eval_batch);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += eval_batch) {
    const std::size_t end = std::min(n, start + eval_batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto [in, tg] = data.gather(idx);
    const Tensor out = model.forward(in).output;
    const std::size_t classes = out.shape().back();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const float* row = &out[r * classes];
      const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
      if (best == static_cast<std::size_t>(tg[r])) ++correct;
    }
  }
  model.clear_forward_state();
  return double(correct) / double(n);
}

}  // namespace oto
