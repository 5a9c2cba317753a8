#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "oto/layers.hpp"
#include "oto/tensor.hpp"
#include "oto/train.hpp"

namespace oto {

/// Flat `key = value` text. '#' starts a comment; blank lines are ignored;
/// duplicate keys are an error.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& source = "<config>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

struct ModelConfig {
  Shape input;         // per-sample shape; empty means "take it from the data"
  std::string layers;  // see parse_layer_list
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  bool penalize_output = false;
};

struct DataConfig {
  std::string kind = "synthetic-classify";  // synthetic-glasso | synthetic-classify | idx | csv
  std::uint64_t seed = 0;
  // synthetic-glasso
  std::size_t groups = 40;
  std::size_t group_size = 5;
  std::size_t support = 10;
  std::size_t samples = 500;
  double noise = 0.01;
  // synthetic-classify
  std::size_t classes = 10;
  std::size_t features = 32;
  double separation = 1.0;
  // held-out fraction for classification data (0 disables the split)
  double test_fraction = 0.0;
  // files
  std::string images;
  std::string labels;
  std::string path;
};

struct PruneConfig {
  std::size_t verify_inputs = 100;
  std::size_t zig_trials = 20;
  bool keep_one = false;
};

struct ExperimentConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig optimizer;
  PruneConfig prune;
  std::string output_dir = "oto_out";
  std::uint64_t seed = 0;

  // Range checks; throws ConfigError naming the offending key.
  void validate() const;
  // Replaces the run seed (model init, shuffling) and, unless data.seed was
  // given explicitly, the data seed.
  void override_seed(std::uint64_t seed);

  bool data_seed_explicit = false;
};

/// Recognized keys (anything else is rejected):
///   seed, output.dir,
///   model.input (e.g. "1,8,8"), model.layers, model.loss, model.penalize_output,
///   data.kind, data.seed, data.groups, data.group_size, data.support,
///   data.samples, data.noise, data.classes, data.features, data.separation,
///   data.test_fraction, data.images, data.labels, data.path,
///   optimizer.kind, optimizer.alpha0, optimizer.decay, optimizer.lambda,
///   optimizer.epsilon, optimizer.switch_epochs, optimizer.batch,
///   optimizer.epochs,
///   prune.verify_inputs, prune.zig_trials, prune.keep_one
/// Relative file paths resolve against `base_dir`.
ExperimentConfig parse_experiment(const std::string& text, const std::string& base_dir = "",
                                  const std::string& source = "<config>");
ExperimentConfig load_experiment(const std::string& path);

}  // namespace oto
