#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "oto/config.hpp"
#include "oto/dataset.hpp"
#include "oto/error.hpp"
#include "oto/model.hpp"
#include "oto/pruner.hpp"
#include "oto/train.hpp"

namespace oto {

/// Failure of one pipeline stage; what() reads "<stage>: <cause>".
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : Error(stage + ": " + cause), stage_(stage) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<GroupLassoProblem> glasso;
};

LoadedData load_data(const ExperimentConfig& config);

// Freshly initialized model; the input shape comes from model.input or, when
// that is absent, from the data.
ModelGraph initial_model(const ExperimentConfig& config, const Dataset& data);

struct ArtifactPaths {
  std::string metrics;
  std::string partition;
  std::string full_checkpoint;
  std::string slim_checkpoint;
  std::string report;
};

ArtifactPaths artifact_paths(const ExperimentConfig& config);

struct PipelineResult {
  TrainResult training;
  std::optional<PruneReport> report;  // absent for group-lasso runs
  double zig_deviation = 0.0;
  std::optional<double> accuracy_full;  // on the held-out split, when present
  std::optional<double> accuracy_slim;
  std::optional<double> oracle_objective;  // group-lasso runs with lambda > 0
};

// Stage commands behind the CLI. Each reads the config, writes its
// artifacts under output.dir and a short human summary to `log`.
void command_partition(const ExperimentConfig& config, std::ostream& log);
void command_train(const ExperimentConfig& config, std::ostream& log);
void command_prune(const ExperimentConfig& config, std::ostream& log);
void command_verify(const ExperimentConfig& config, std::ostream& log);
void command_flops(const ExperimentConfig& config, std::ostream& log);

/// partition -> train -> prune -> equivalence check -> FLOPs/params, writing
/// metrics.jsonl, partition.txt, full.ckpt, slim.ckpt and prune_report.jsonl.
PipelineResult run_pipeline(const ExperimentConfig& config, std::ostream& log);

}  // namespace oto
