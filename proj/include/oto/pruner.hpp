#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oto/model.hpp"
#include "oto/partition.hpp"

namespace oto {

/// Multiply-accumulate count per sample and scalar counts.
struct FlopsParams {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;  // trainable scalars
  std::uint64_t stored = 0;  // all stored scalars, BN mean/std included
};

///   linear     m * n
///   convbn     m * (c * kh * kw) * oh * ow  +  m * oh * ow  (BN scale)
///   residual   both branches
///   attention  sum_h m_h * n
FlopsParams count_flops_params(const ModelGraph& model);

struct LayerMap {
  std::size_t layer = 0;
  std::size_t old_width = 0;
  std::vector<std::size_t> kept;  // kept[new unit] = old unit
};

struct PruneReport {
  std::vector<std::size_t> zero_groups;      // groups removed from the model
  std::vector<std::size_t> retained_groups;  // penalized groups kept
  std::vector<LayerMap> layer_maps;
  FlopsParams before;
  FlopsParams after;
  // Trainable scalars removed as members of pruned groups, and as input
  // slices (columns / input channels) of surviving consumer rows.
  std::uint64_t removed_group_params = 0;
  std::uint64_t removed_input_params = 0;
  double max_deviation = 0.0;
  std::string slim_description;

  // JSON lines: one summary object, then one object per compute layer.
  std::string to_jsonl() const;
};

struct PruneOptions {
  // Keep the lowest-indexed group of a layer (or attention head) whose groups
  // are all selected instead of failing with DegenerateLayer.
  bool keep_one = false;
};

/// Removes the listed groups (their own rows / channels and the matching input
/// slices of the next compute layer). Groups of the model's output layer
/// cannot be removed.
std::pair<ModelGraph, PruneReport> prune_groups(const ModelGraph& model, const GroupPartition& partition,
                                                std::span<const std::size_t> group_ids,
                                                const PruneOptions& options = {});

/// Removes every penalized group whose parameters are exactly zero in `model`
/// (output-layer groups are always retained).
std::pair<ModelGraph, PruneReport> prune(const ModelGraph& model, const GroupPartition& partition,
                                         const PruneOptions& options = {});

/// Max |full(x) - slim(x)| over `inputs` seeded N(0,1) samples. Throws
/// StructuralError if the models disagree on input or output shape.
double equivalence_check(const ModelGraph& full, const ModelGraph& slim, std::size_t inputs, std::uint64_t seed);

}  // namespace oto
