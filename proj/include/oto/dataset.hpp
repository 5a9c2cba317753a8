#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oto/partition.hpp"
#include "oto/tensor.hpp"

namespace oto {

/// Inputs are (samples, sample_shape...). Targets are (samples) class
/// indices stored as floats, or (samples, k) regression targets.
struct Dataset {
  Tensor inputs;
  Tensor targets;

  std::size_t sample_count() const { return inputs.empty() ? 0 : inputs.extent(0); }
  Shape sample_shape() const;
  // Throws InvalidArgument when inputs and targets disagree in sample count.
  void validate() const;
  // Copies the listed samples, in order, into a (batch, ...) pair.
  std::pair<Tensor, Tensor> gather(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Seeded random split; the first element holds round((1 - test_fraction) * n)
// samples.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

struct GroupLassoProblem {
  Dataset data;  // inputs (samples, groups * group_size), targets (samples, 1)
  std::vector<float> x_true;
  std::vector<std::size_t> support;  // planted nonzero group ids, ascending
  std::size_t groups = 0;
  std::size_t group_size = 0;

  GroupPartition partition() const { return GroupPartition::contiguous(groups, group_size); }
};

/// A ~ N(0,1) entrywise, x_true ~ N(0,1) on `support_size` randomly chosen
/// groups and 0 elsewhere, y = A x_true + N(0, noise^2).
GroupLassoProblem generate_group_lasso(std::size_t groups, std::size_t group_size, std::size_t support_size,
                                       std::size_t samples, double noise, std::uint64_t seed);

/// Gaussian class blobs: class centers ~ N(0, separation^2 I) in `features`
/// dimensions, samples = center + N(0, I). Labels are balanced round-robin.
Dataset generate_blobs(std::size_t classes, std::size_t features, std::size_t samples, double separation,
                       std::uint64_t seed);

/// IDX images (magic 0x00000803, rank 3, unsigned bytes) and labels (magic
/// 0x00000801, rank 1). Pixels scale to [0, 1]; inputs are (n, 1, rows, cols).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writers used by tests and tooling; `pixels` holds n*rows*cols bytes.
void write_idx_images(const std::string& path, std::size_t n, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels);

/// Numeric CSV, one sample per line, label (class index) in the last column.
/// Lines starting with '#' and blank lines are skipped.
Dataset load_csv(const std::string& path);

}  // namespace oto
