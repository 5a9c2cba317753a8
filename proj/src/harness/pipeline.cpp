#include "oto/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include "oto/checkpoint.hpp"
#include "oto/model_spec.hpp"
#include "oto/oracle.hpp"
#include "oto/partition.hpp"
#include "oto/regularizers.hpp"

namespace oto {

namespace {

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

void ensure_dir(const ExperimentConfig& config) { std::filesystem::create_directories(config.output_dir); }

bool is_glasso(const ExperimentConfig& config) { return config.data.kind == "synthetic-glasso"; }

void require_model(const ExperimentConfig& config, const char* command) {
  if (is_glasso(config)) {
    throw StageError(command, "data.kind = synthetic-glasso trains a least-squares vector, not a model; '" +
                                  std::string(command) + "' needs model.layers with classification data");
  }
}

std::string trace_text(const TrainResult& r) {
  std::string out;
  for (const auto& m : r.trace) out += to_json_line(m) + "\n";
  return out;
}

PartitionOptions partition_options(const ExperimentConfig& config) {
  PartitionOptions o;
  o.penalize_output_layer = config.model.penalize_output;
  return o;
}

// The trained model when full.ckpt exists, else the initial model.
ModelGraph current_model(const ExperimentConfig& config, const Dataset& data, bool require_checkpoint) {
  const ModelGraph structure = initial_model(config, data);
  const std::string path = artifact_paths(config).full_checkpoint;
  if (!std::filesystem::exists(path)) {
    if (require_checkpoint) throw Error("'" + path + "' not found; run the train command first");
    return structure;
  }
  return rebuild_with_arrays(structure, load_checkpoint(path));
}

void save_vector(const std::string& path, const std::vector<float>& x) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(out, {{"x", Tensor({x.size()}, x), true}});
}

void log_flops(std::ostream& log, const char* label, const FlopsParams& f) {
  log << label << ": flops=" << f.flops << " params=" << f.params << " stored=" << f.stored << "\n";
}

}  // namespace

LoadedData load_data(const ExperimentConfig& config) {
  return stage("data", [&] {
    const DataConfig& d = config.data;
    LoadedData out;
    Dataset all;
    if (d.kind == "synthetic-glasso") {
      out.glasso = generate_group_lasso(d.groups, d.group_size, d.support, d.samples, d.noise, d.seed);
      out.train = out.glasso->data;
      return out;
    }
    if (d.kind == "synthetic-classify") {
      all = generate_blobs(d.classes, d.features, d.samples, d.separation, d.seed);
    } else if (d.kind == "idx") {
      all = load_idx(d.images, d.labels);
    } else {
      all = load_csv(d.path);
    }
    // Flat samples may be viewed as images (or any shape) of equal size.
    const Shape& want = config.model.input;
    if (!want.empty() && want != all.sample_shape() && element_count(want) == element_count(all.sample_shape())) {
      Shape shape{all.sample_count()};
      shape.insert(shape.end(), want.begin(), want.end());
      all.inputs = all.inputs.reshaped(shape);
    }
    if (d.test_fraction > 0.0) {
      auto [train, test] = train_test_split(all, d.test_fraction, d.seed ^ 0x5eedULL);
      out.train = std::move(train);
      out.test = std::move(test);
    } else {
      out.train = std::move(all);
    }
    return out;
  });
}

ModelGraph initial_model(const ExperimentConfig& config, const Dataset& data) {
  return stage("model", [&] {
    const Shape input = config.model.input.empty() ? data.sample_shape() : config.model.input;
    ModelGraph m = build_model(input, config.model.layers, config.model.loss, config.seed);
    if (m.sample_shape() != data.sample_shape()) {
      throw ConfigError("model.input " + shape_to_string(m.sample_shape()) + " does not match data samples " +
                        shape_to_string(data.sample_shape()));
    }
    return m;
  });
}

ArtifactPaths artifact_paths(const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  return {(dir / "metrics.jsonl").string(), (dir / "partition.txt").string(), (dir / "full.ckpt").string(),
          (dir / "slim.ckpt").string(), (dir / "prune_report.jsonl").string()};
}

void command_partition(const ExperimentConfig& config, std::ostream& log) {
  const LoadedData data = load_data(config);
  const GroupPartition partition = stage("partition", [&] {
    if (is_glasso(config)) return data.glasso->partition();
    return partition_zig(initial_model(config, data.train), partition_options(config));
  });
  const std::string text = export_partition(partition);
  stage("partition", [&] {
    ensure_dir(config);
    write_text(artifact_paths(config).partition, text);
  });
  log << text;
  log << "groups=" << partition.size() << " penalized=" << partition.penalized_count()
      << " dimension=" << partition.dimension() << "\n";
}

void command_train(const ExperimentConfig& config, std::ostream& log) {
  const LoadedData data = load_data(config);
  const ArtifactPaths paths = artifact_paths(config);
  stage("output", [&] { ensure_dir(config); });
  TrainResult result;
  if (is_glasso(config)) {
    const GroupPartition partition = data.glasso->partition();
    result = stage("train", [&] {
      LeastSquaresObjective objective(data.train);
      return train(objective, std::vector<float>(partition.dimension(), 0.0f), partition, config.optimizer);
    });
    stage("train", [&] { save_vector(paths.full_checkpoint, result.x); });
  } else {
    ModelGraph model = initial_model(config, data.train);
    const GroupPartition partition = stage("partition", [&] { return partition_zig(model, partition_options(config)); });
    result = stage("train", [&] { return train(model, partition, data.train, config.optimizer); });
    stage("train", [&] { save_checkpoint(paths.full_checkpoint, model); });
  }
  stage("train", [&] { write_text(paths.metrics, trace_text(result)); });
  log << trace_text(result);
  if (!result.audit.clean()) {
    throw StageError("train", "half-space audit recorded violations (kept " +
                                  std::to_string(result.audit.kept_violations) + ", descent " +
                                  std::to_string(result.audit.descent_violations) + ", monotone " +
                                  std::to_string(result.audit.monotone_violations) + ")");
  }
}

void command_prune(const ExperimentConfig& config, std::ostream& log) {
  require_model(config, "prune");
  const LoadedData data = load_data(config);
  const ArtifactPaths paths = artifact_paths(config);
  const ModelGraph full = stage("prune", [&] { return current_model(config, data.train, true); });
  const GroupPartition partition = stage("partition", [&] { return partition_zig(full, partition_options(config)); });
  auto [slim, report] = stage("prune", [&] { return prune(full, partition, {config.prune.keep_one}); });
  report.max_deviation =
      stage("verify", [&] { return equivalence_check(full, slim, config.prune.verify_inputs, config.seed); });
  stage("prune", [&] {
    save_checkpoint(paths.slim_checkpoint, slim);
    write_text(paths.report, report.to_jsonl());
  });
  log << report.to_jsonl();
}

void command_verify(const ExperimentConfig& config, std::ostream& log) {
  require_model(config, "verify");
  const LoadedData data = load_data(config);
  const ArtifactPaths paths = artifact_paths(config);
  const ModelGraph full = stage("verify", [&] { return current_model(config, data.train, false); });
  const GroupPartition partition = stage("partition", [&] { return partition_zig(full, partition_options(config)); });
  const double zig = stage("verify", [&] {
    return verify_zero_invariance(full, partition, config.prune.zig_trials, config.seed);
  });
  log << "zero_invariance_max_deviation=" << zig << " trials=" << config.prune.zig_trials << "\n";
  bool ok = zig == 0.0;
  if (std::filesystem::exists(paths.slim_checkpoint)) {
    const double dev = stage("verify", [&] {
      const ModelGraph slim = rebuild_with_arrays(full, load_checkpoint(paths.slim_checkpoint));
      return equivalence_check(full, slim, config.prune.verify_inputs, config.seed);
    });
    log << "slim_max_deviation=" << dev << " inputs=" << config.prune.verify_inputs << "\n";
    ok = ok && dev <= 1e-5;
  }
  if (!ok) throw StageError("verify", "verification failed");
}

void command_flops(const ExperimentConfig& config, std::ostream& log) {
  require_model(config, "flops");
  const LoadedData data = load_data(config);
  const ArtifactPaths paths = artifact_paths(config);
  const ModelGraph full = stage("flops", [&] { return current_model(config, data.train, false); });
  const FlopsParams f = count_flops_params(full);
  log << full.describe() << "\n";
  log_flops(log, "full", f);
  if (std::filesystem::exists(paths.slim_checkpoint)) {
    const ModelGraph slim =
        stage("flops", [&] { return rebuild_with_arrays(full, load_checkpoint(paths.slim_checkpoint)); });
    const FlopsParams s = count_flops_params(slim);
    log << slim.describe() << "\n";
    log_flops(log, "slim", s);
    log << "flops_ratio=" << (f.flops ? double(s.flops) / double(f.flops) : 1.0)
        << " params_ratio=" << (f.params ? double(s.params) / double(f.params) : 1.0) << "\n";
  }
}

PipelineResult run_pipeline(const ExperimentConfig& config, std::ostream& log) {
  const LoadedData data = load_data(config);
  const ArtifactPaths paths = artifact_paths(config);
  stage("output", [&] { ensure_dir(config); });
  PipelineResult result;

  if (is_glasso(config)) {
    const GroupPartition partition = data.glasso->partition();
    stage("partition", [&] { write_text(paths.partition, export_partition(partition)); });
    result.training = stage("train", [&] {
      LeastSquaresObjective objective(data.train);
      return train(objective, std::vector<float>(partition.dimension(), 0.0f), partition, config.optimizer);
    });
    stage("train", [&] {
      write_text(paths.metrics, trace_text(result.training));
      save_vector(paths.full_checkpoint, result.training.x);
    });
    if (config.optimizer.lambda > 0.0) {
      result.oracle_objective = stage("oracle", [&] {
        return bcd_oracle(data.train, partition, config.optimizer.lambda, 1e-10, 100000).objective;
      });
    }
    const SparsityMetrics s = sparsity_metrics(result.training.x, partition);
    log << "group_sparsity=" << s.ratio << " zero_groups=" << s.zero_groups << "\n";
    if (!result.training.trace.empty()) log << "objective=" << result.training.trace.back().objective << "\n";
    if (result.oracle_objective) log << "oracle_objective=" << *result.oracle_objective << "\n";
  } else {
    ModelGraph model = initial_model(config, data.train);
    const GroupPartition partition = stage("partition", [&] {
      GroupPartition p = partition_zig(model, partition_options(config));
      write_text(paths.partition, export_partition(p));
      return p;
    });
    result.zig_deviation = stage("verify", [&] {
      return verify_zero_invariance(model, partition, config.prune.zig_trials, config.seed);
    });
    result.training = stage("train", [&] { return train(model, partition, data.train, config.optimizer); });
    stage("train", [&] {
      write_text(paths.metrics, trace_text(result.training));
      save_checkpoint(paths.full_checkpoint, model);
    });
    auto [slim, report] = stage("prune", [&] { return prune(model, partition, {config.prune.keep_one}); });
    report.max_deviation =
        stage("verify", [&] { return equivalence_check(model, slim, config.prune.verify_inputs, config.seed); });
    stage("prune", [&] {
      save_checkpoint(paths.slim_checkpoint, slim);
      write_text(paths.report, report.to_jsonl());
    });
    if (data.test) {
      result.accuracy_full = accuracy(model, *data.test);
      result.accuracy_slim = accuracy(slim, *data.test);
    }
    const SparsityMetrics s = sparsity_metrics(model.flat_parameters(), partition);
    log << "group_sparsity=" << s.ratio << " zero_groups=" << s.zero_groups << "/"
        << (s.zero_groups + s.nonzero_groups) << "\n";
    log << "zero_invariance_max_deviation=" << result.zig_deviation << "\n";
    log << "slim_max_deviation=" << report.max_deviation << "\n";
    log_flops(log, "full", report.before);
    log_flops(log, "slim", report.after);
    if (result.accuracy_full) {
      log << "test_accuracy_full=" << *result.accuracy_full << " test_accuracy_slim=" << *result.accuracy_slim
          << "\n";
    }
    result.report = std::move(report);
  }
  if (!result.training.audit.clean()) {
    throw StageError("train", "half-space audit recorded violations");
  }
  return result;
}

}  // namespace oto
