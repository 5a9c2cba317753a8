#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oto/dataset.hpp"
#include "oto/model.hpp"
#include "oto/optimizers.hpp"
#include "oto/partition.hpp"

namespace oto {

/// Smooth part f of the objective over a fixed sample set, as a function of
/// the flat parameter vector.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t sample_count() const = 0;
  virtual std::size_t dimension() const = 0;
  // f over all samples.
  virtual double loss(std::span<const float> x) = 0;
  // Mean gradient over `batch` written into `grad`; returns the batch loss.
  virtual double batch_gradient(std::span<const float> x, std::span<const std::size_t> batch,
                                std::span<float> grad) = 0;
};

/// f(x) = (1/N) ||A x - y||^2 with A = inputs viewed as (N, d).
class LeastSquaresObjective final : public Objective {
 public:
  explicit LeastSquaresObjective(const Dataset& data);

  std::size_t sample_count() const override { return rows_; }
  std::size_t dimension() const override { return cols_; }
  double loss(std::span<const float> x) override;
  double batch_gradient(std::span<const float> x, std::span<const std::size_t> batch,
                        std::span<float> grad) override;

 private:
  std::vector<float> a_;
  std::vector<float> y_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

/// The model's loss on a dataset; x is the model's flat trainable vector.
class ModelObjective final : public Objective {
 public:
  ModelObjective(const ModelGraph& model, const Dataset& data, std::size_t eval_batch = 256);

  std::size_t sample_count() const override { return data_.sample_count(); }
  std::size_t dimension() const override { return model_.parameter_count(); }
  double loss(std::span<const float> x) override;
  double batch_gradient(std::span<const float> x, std::span<const std::size_t> batch,
                        std::span<float> grad) override;

 private:
  ModelGraph model_;
  const Dataset& data_;
  std::size_t eval_batch_;
};

enum class OptimizerKind { HSPG, SGD, ProxSG };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::HSPG;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double alpha0 = 0.1;
  double decay = 1.0;  // multiplicative step decay per epoch
  double lambda = 0.0;
  double epsilon = 0.0;
  std::size_t switch_epochs = 1;  // N_P in epochs; converted to iterations
  std::uint64_t seed = 0;

  // Throws InvalidParameter on any out-of-range field.
  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // f over the full training set after the epoch
  double objective = 0.0; // f + lambda r
  double group_sparsity = 0.0;
  std::size_t zero_groups = 0;
  double alpha = 0.0;  // step size used in the epoch's last iteration
  std::string stage;
};

// One JSON object, no trailing newline.
std::string to_json_line(const EpochMetrics& m);

struct TrainResult {
  std::vector<float> x;
  std::vector<EpochMetrics> trace;
  StepAudit audit;
  std::size_t iterations = 0;
  std::size_t switch_iteration = 0;
};

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size);

/// Seeded mini-batch loop: shuffle each epoch, mean-gradient batches (the last
/// batch may be short), one optimizer step per batch, metrics per epoch.
TrainResult train(Objective& objective, std::vector<float> x0, const GroupPartition& partition,
                  const TrainConfig& config);

// Trains the model's own parameters on `data` and loads the result back.
TrainResult train(ModelGraph& model, const GroupPartition& partition, const Dataset& data,
                  const TrainConfig& config);

// Fraction of samples whose argmax output equals the label.
double accuracy(ModelGraph& model, const Dataset& data, std::size_t eval_batch = 256);

}  // namespace oto
