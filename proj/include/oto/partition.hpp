#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oto/model.hpp"

namespace oto {

enum class StructureKind { ConvChannel, ResidualChannel, LinearRow, AttentionRow, Generic };

std::string to_string(StructureKind kind);

struct ParamIndex {
  ArrayId array = 0;
  std::size_t index = 0;

  bool operator==(const ParamIndex&) const = default;
};

// Which output slice a group controls: channel `unit` of layer `layer` (for
// attention, row `unit` of head `head`).
struct StructureTag {
  StructureKind kind = StructureKind::Generic;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t unit = 0;
};

struct Group {
  std::vector<ParamIndex> members;
  // Positions of the members in the flat trainable-parameter vector.
  std::vector<std::size_t> offsets;
  StructureTag tag;
  bool penalized = true;
};

/// Disjoint, nonempty groups over a flat parameter vector of length
/// dimension(). Construction rejects overlaps and out-of-range offsets.
class GroupPartition {
 public:
  GroupPartition() = default;
  GroupPartition(std::size_t dimension, std::vector<Group> groups);

  // `count` groups of `size` consecutive entries over a single array 0.
  static GroupPartition contiguous(std::size_t count, std::size_t size);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return groups_.size(); }
  const std::vector<Group>& groups() const noexcept { return groups_; }
  const Group& group(std::size_t id) const { return groups_.at(id); }
  std::span<const std::size_t> offsets(std::size_t id) const { return groups_.at(id).offsets; }
  bool penalized(std::size_t id) const { return groups_.at(id).penalized; }

  std::size_t penalized_count() const;
  std::vector<std::size_t> penalized_ids() const;
  // Flat entries not covered by any group.
  std::vector<std::size_t> uncovered() const;

 private:
  std::size_t dimension_ = 0;
  std::vector<Group> groups_;
};

struct PartitionOptions {
  // Groups of the last compute layer (the model head) are still grouped but
  // left out of the regularizer unless this is set.
  bool penalize_output_layer = false;
};

/// Zero-invariant groups for Conv-BN, residual, linear and attention layers:
///   convbn    channel c: kernel row c, bias[c], gamma[c], beta[c]
///   residual  channel c: the same four sets from both branches
///   linear    row i:     weight row i, bias[i]
///   attention head h row i: W_h row i, b_h[i]
/// BN mean/std are not trainable and belong to no group.
GroupPartition partition_zig(const ModelGraph& model, const PartitionOptions& options = {});

// Index of the last compute layer, or npos when the model has none.
std::size_t output_layer_index(const ModelGraph& model);

// One line per group: id, structure tag, penalized flag, array:index spans.
std::string export_partition(const GroupPartition& partition);

void zero_groups(ModelGraph& model, const GroupPartition& partition, std::span<const std::size_t> ids);

// Largest |value| in the group's designated output slice from the model's
// last forward pass.
double designated_slice_max_abs(const ModelGraph& model, const StructureTag& tag);

/// Randomizes parameters and inputs `trials` times, zeroes a random subset of
/// groups, and returns the largest |value| seen in any zeroed group's
/// designated output slice. Zero-invariance means this is exactly 0.
double verify_zero_invariance(const ModelGraph& model, const GroupPartition& partition,
                              std::size_t trials, std::uint64_t seed);

// Fills every trainable array with N(0, scale^2) draws, BN means with N(0,1)
// and BN std with U(0.5, 2).
void randomize_parameters(ModelGraph& model, std::uint64_t seed, double scale = 1.0);

}  // namespace oto
