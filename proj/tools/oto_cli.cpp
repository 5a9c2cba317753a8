// Command-line front end: one subcommand per pipeline stage plus `run`.
//
//   oto partition --config exp.cfg [--seed N]
//   oto train     --config exp.cfg [--seed N]
//   oto prune     --config exp.cfg [--seed N]
//   oto verify    --config exp.cfg [--seed N]
//   oto flops     --config exp.cfg [--seed N]
//   oto run       --config a.cfg [--config b.cfg ...] [--seed N] [--jobs J]

#include <algorithm>
#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "oto/pipeline.hpp"

namespace {

oto::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  try {
    oto::ExperimentConfig config = oto::load_experiment(path);
    if (seed) config.override_seed(*seed);
    return config;
  } catch (const oto::Error& e) {
    throw oto::StageError("config", e.what());
  }
}

int report_failure(const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return 1;
}

// Runs independent configs, each in its own output directory, on up to
// `jobs` threads. Logs are buffered per config and printed in order.
int run_many(const std::vector<std::string>& paths, const std::optional<std::uint64_t>& seed, std::size_t jobs) {
  std::vector<std::string> logs(paths.size());
  std::vector<std::string> errors(paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++) {
      std::ostringstream log;
      try {
        oto::run_pipeline(load(paths[i], seed), log);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      logs[i] = log.str();
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, paths.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  int status = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (paths.size() > 1) std::cout << "== " << paths[i] << "\n";
    std::cout << logs[i];
    if (!errors[i].empty()) status = report_failure(paths[i] + ": " + errors[i]);
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-invariant group partitioning, HSPG training and one-shot pruning"};
  app.require_subcommand(1);

  using Command = std::function<void(const oto::ExperimentConfig&, std::ostream&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> stages = {
      {"partition", "Export the zero-invariant group partition", oto::command_partition},
      {"train", "Train and write metrics.jsonl and full.ckpt", oto::command_train},
      {"prune", "Prune zero groups of full.ckpt into slim.ckpt", oto::command_prune},
      {"verify", "Check zero-invariance and slim/full output equivalence", oto::command_verify},
      {"flops", "Report FLOPs and parameter counts", oto::command_flops},
  };

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> run_configs;
  std::size_t jobs = 1;
  Command selected;

  for (const auto& [name, help, command] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->callback([&selected, cmd = command] { selected = cmd; });
  }
  CLI::App* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", run_configs, "Experiment config file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--jobs", jobs, "Configs to run in parallel")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return run_many(run_configs, seed, jobs);
  try {
    selected(load(config_path, seed), std::cout);
  } catch (const std::exception& e) {
    return report_failure(e.what());
  }
  return 0;
}
