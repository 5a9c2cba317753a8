#include "oto/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "oto/error.hpp"

namespace oto {

Shape Dataset::sample_shape() const {
  if (inputs.rank() == 0) return {};
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

void Dataset::validate() const {
  if (inputs.empty()) throw InvalidArgument("dataset has no inputs");
  if (targets.empty() || targets.extent(0) != inputs.extent(0)) {
    throw InvalidArgument("dataset has " + std::to_string(inputs.extent(0)) + " inputs but " +
                          std::to_string(targets.empty() ? 0 : targets.extent(0)) + " targets");
  }
}

std::pair<Tensor, Tensor> Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw InvalidArgument("cannot gather an empty batch");
  const std::size_t n = sample_count();
  const std::size_t in_width = inputs.size() / n;
  const std::size_t tg_width = targets.size() / n;
  Shape in_shape = inputs.shape();
  Shape tg_shape = targets.shape();
  in_shape[0] = indices.size();
  tg_shape[0] = indices.size();
  Tensor in(in_shape);
  Tensor tg(tg_shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= n) throw InvalidArgument("sample index " + std::to_string(i) + " out of range");
    std::copy_n(inputs.data().begin() + i * in_width, in_width, in.data().begin() + r * in_width);
    std::copy_n(targets.data().begin() + i * tg_width, tg_width, tg.data().begin() + r * tg_width);
  }
  return {std::move(in), std::move(tg)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  auto [in, tg] = gather(indices);
  return {std::move(in), std::move(tg)};
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test fraction must lie in (0, 1)");
  const std::size_t n = data.sample_count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround((1.0 - test_fraction) * double(n)));
  if (n_train == 0 || n_train == n) throw InvalidArgument("split leaves an empty side");
  const std::span<const std::size_t> all(order);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

GroupLassoProblem generate_group_lasso(std::size_t groups, std::size_t group_size, std::size_t support_size,
                                       std::size_t samples, double noise, std::uint64_t seed) {
  if (support_size > groups) throw InvalidArgument("support size exceeds group count");
  if (groups == 0 || group_size == 0 || samples == 0) throw InvalidArgument("empty group lasso problem");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = groups * group_size;

  GroupLassoProblem p;
  p.groups = groups;
  p.group_size = group_size;
  std::vector<std::size_t> ids(groups);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  p.support.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(support_size));
  std::sort(p.support.begin(), p.support.end());
  p.x_true.assign(d, 0.0f);
  for (std::size_t g : p.support) {
    for (std::size_t j = 0; j < group_size; ++j) p.x_true[g * group_size + j] = static_cast<float>(normal(rng));
  }

  Tensor a({samples, d});
  for (float& v : a.data()) v = static_cast<float>(normal(rng));
  Tensor y({samples, 1});
  for (std::size_t i = 0; i < samples; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += double(a[i * d + j]) * double(p.x_true[j]);
    const double e = normal(rng);  // drawn unconditionally so the stream does not depend on noise
    y[i] = static_cast<float>(s + noise * e);
  }
  p.data = {std::move(a), std::move(y)};
  return p;
}

Dataset generate_blobs(std::size_t classes, std::size_t features, std::size_t samples, double separation,
                       std::uint64_t seed) {
  if (classes < 2 || features == 0 || samples == 0) throw InvalidArgument("blobs need >= 2 classes and samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(classes * features);
  for (double& c : centers) c = separation * normal(rng);
  Tensor x({samples, features});
  Tensor y({samples});
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t c = i % classes;
    for (std::size_t j = 0; j < features; ++j) {
      x[i * features + j] = static_cast<float>(centers[c * features + j] + normal(rng));
    }
    y[i] = static_cast<float>(c);
  }
  return {std::move(x), std::move(y)};
}

namespace {

class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open '" + path + "'");
  }

  std::uint32_t u32_be(const char* what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
  }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": truncated " + what, offset_ + static_cast<std::size_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void put_u32_be(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  ByteReader img(images_path);
  const std::uint32_t img_magic = img.u32_be("image magic");
  if (img_magic != 0x00000803u) throw FormatError(images_path + ": bad image magic", 0);
  const std::uint32_t n = img.u32_be("image count");
  const std::uint32_t rows = img.u32_be("row count");
  const std::uint32_t cols = img.u32_be("column count");
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path + ": zero dimension", img.offset() - 4);
  std::vector<char> pixels(std::size_t(n) * rows * cols);
  img.read(pixels.data(), pixels.size(), "pixel payload");

  ByteReader lab(labels_path);
  const std::uint32_t lab_magic = lab.u32_be("label magic");
  if (lab_magic != 0x00000801u) throw FormatError(labels_path + ": bad label magic", 0);
  const std::size_t count_at = lab.offset();
  const std::uint32_t n_labels = lab.u32_be("label count");
  if (n_labels != n) {
    throw FormatError(labels_path + ": " + std::to_string(n_labels) + " labels for " + std::to_string(n) +
                          " images",
                      count_at);
  }
  std::vector<char> labels(n);
  lab.read(labels.data(), labels.size(), "label payload");

  Tensor x({n, 1, rows, cols});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    x[i] = static_cast<float>(static_cast<unsigned char>(pixels[i])) / 255.0f;
  }
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<float>(static_cast<unsigned char>(labels[i]));
  return {std::move(x), std::move(y)};
}

void write_idx_images(const std::string& path, std::size_t n, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (pixels.size() != n * rows * cols) throw InvalidArgument("pixel count does not match n*rows*cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  put_u32_be(out, 0x00000803u);
  put_u32_be(out, static_cast<std::uint32_t>(n));
  put_u32_be(out, static_cast<std::uint32_t>(rows));
  put_u32_be(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  put_u32_be(out, 0x00000801u);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<float> values;
  std::vector<float> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  std::size_t next_start = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = next_start;
    next_start += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') {
      continue;
    }
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stof(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path + ": line " + std::to_string(line_no) + ": not a number: '" + cell + "'", line_start);
      }
    }
    if (row.size() < 2) throw FormatError(path + ": line " + std::to_string(line_no) + " needs >= 2 columns", line_start);
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw FormatError(path + ": line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                            " columns, expected " + std::to_string(width),
                        line_start);
    }
    labels.push_back(row.back());
    values.insert(values.end(), row.begin(), row.end() - 1);
  }
  if (labels.empty()) throw FormatError(path + ": no samples", 0);
  const std::size_t n = labels.size();
  return {Tensor({n, width - 1}, std::move(values)), Tensor({n}, std::move(labels))};
}

}  // namespace oto
