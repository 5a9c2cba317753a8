#include "oto/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "oto/error.hpp"

namespace oto {

namespace {

struct Design {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;
  std::vector<double> y;
};

Design design_from(const Dataset& data) {
  data.validate();
  Design d;
  d.rows = data.sample_count();
  d.cols = data.inputs.size() / d.rows;
  if (data.targets.size() != d.rows) throw InvalidArgument("group lasso needs one scalar target per sample");
  d.a.assign(data.inputs.data().begin(), data.inputs.data().end());
  d.y.assign(data.targets.data().begin(), data.targets.data().end());
  return d;
}

// Largest eigenvalue of the symmetric PSD matrix m (n x n) by power iteration.
double largest_eigenvalue(const std::vector<double>& m, std::size_t n) {
  std::vector<double> v(n, 1.0 / std::sqrt(double(n)));
  std::vector<double> w(n);
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += m[i * n + j] * v[j];
      w[i] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    if (std::abs(norm - lambda) <= 1e-14 * norm) return norm;
    lambda = norm;
  }
  return lambda;
}

template <typename T>
double objective_impl(const Dataset& data, const GroupPartition& partition, double lambda, std::span<const T> x) {
  const Design d = design_from(data);
  if (x.size() != d.cols || partition.dimension() != d.cols) {
    throw InvalidArgument("parameter vector does not match the design matrix");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < d.rows; ++i) {
    double r = -d.y[i];
    for (std::size_t j = 0; j < d.cols; ++j) r += d.a[i * d.cols + j] * double(x[j]);
    loss += r * r;
  }
  double reg = 0.0;
  for (const Group& g : partition.groups()) {
    if (!g.penalized) continue;
    double s = 0.0;
    for (std::size_t o : g.offsets) s += double(x[o]) * double(x[o]);
    reg += std::sqrt(s);
  }
  return loss / double(d.rows) + lambda * reg;
}

template <typename T>
std::vector<std::size_t> zero_ids_impl(std::span<const T> x, const GroupPartition& partition) {
  std::vector<std::size_t> ids;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (!partition.penalized(g)) continue;
    const auto offs = partition.offsets(g);
    if (std::all_of(offs.begin(), offs.end(), [&](std::size_t o) { return x[o] == T{0}; })) ids.push_back(g);
  }
  return ids;
}

}  // namespace

BcdResult bcd_oracle(const Dataset& data, const GroupPartition& partition, double lambda, double tol,
                     std::size_t max_sweeps, std::span<const double> x0) {
  if (!(tol > 0.0)) throw InvalidArgument("oracle tolerance must be positive");
  if (!(lambda >= 0.0)) throw InvalidParameter("lambda must be nonnegative");
  const Design d = design_from(data);
  if (partition.dimension() != d.cols) throw InvalidArgument("partition does not match the design matrix");
  const double inv_n = 1.0 / double(d.rows);

  // Blocks: every group, plus singleton blocks for ungrouped entries.
  struct Block {
    std::vector<std::size_t> idx;
    bool penalized;
    double lipschitz = 0.0;
  };
  std::vector<Block> blocks;
  for (const Group& g : partition.groups()) blocks.push_back({g.offsets, g.penalized});
  for (std::size_t o : partition.uncovered()) blocks.push_back({{o}, false});
  for (Block& b : blocks) {
    const std::size_t m = b.idx.size();
    std::vector<double> gram(m * m, 0.0);
    for (std::size_t i = 0; i < d.rows; ++i) {
      const double* row = &d.a[i * d.cols];
      for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < m; ++q) gram[p * m + q] += row[b.idx[p]] * row[b.idx[q]] * inv_n;
      }
    }
    b.lipschitz = 2.0 * largest_eigenvalue(gram, m);
  }

  std::vector<double> x(d.cols, 0.0);
  if (!x0.empty()) {
    if (x0.size() != d.cols) throw InvalidArgument("oracle start point has wrong length");
    x.assign(x0.begin(), x0.end());
  }
  std::vector<double> residual(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) {
    double r = -d.y[i];
    for (std::size_t j = 0; j < d.cols; ++j) r += d.a[i * d.cols + j] * x[j];
    residual[i] = r;
  }

  BcdResult result;
  std::vector<double> step;
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (const Block& b : blocks) {
      if (b.lipschitz == 0.0) {
        // Columns are identically zero: f does not depend on them.
        for (std::size_t j : b.idx) {
          const double target = b.penalized ? 0.0 : x[j];
          max_change = std::max(max_change, std::abs(target - x[j]));
          x[j] = target;
        }
        continue;
      }
      const std::size_t m = b.idx.size();
      step.assign(m, 0.0);
      for (std::size_t p = 0; p < m; ++p) {
        double grad = 0.0;
        for (std::size_t i = 0; i < d.rows; ++i) grad += d.a[i * d.cols + b.idx[p]] * residual[i];
        step[p] = x[b.idx[p]] - 2.0 * inv_n * grad / b.lipschitz;
      }
      if (b.penalized) {
        // Closed-form group soft-threshold with radius lambda / L_g.
        double norm = 0.0;
        for (double v : step) norm += v * v;
        norm = std::sqrt(norm);
        const double tau = lambda / b.lipschitz;
        const double scale = norm <= tau ? 0.0 : 1.0 - tau / norm;
        for (double& v : step) v *= scale;
      }
      for (std::size_t p = 0; p < m; ++p) {
        const std::size_t j = b.idx[p];
        const double delta = step[p] - x[j];
        if (delta == 0.0) continue;
        max_change = std::max(max_change, std::abs(delta));
        for (std::size_t i = 0; i < d.rows; ++i) residual[i] += d.a[i * d.cols + j] * delta;
        x[j] = step[p];
      }
    }
    if (!std::isfinite(max_change)) throw OracleFailure("block coordinate descent diverged");
    if (max_change < tol) {
      result.sweeps = sweep;
      result.x = std::move(x);
      result.objective = group_lasso_objective(data, partition, lambda, std::span<const double>(result.x));
      return result;
    }
  }
  throw OracleFailure("block coordinate descent did not reach tolerance " + std::to_string(tol) + " in " +
                      std::to_string(max_sweeps) + " sweeps");
}

double group_lasso_objective(const Dataset& data, const GroupPartition& partition, double lambda,
                             std::span<const double> x) {
  return objective_impl(data, partition, lambda, x);
}

double group_lasso_objective(const Dataset& data, const GroupPartition& partition, double lambda,
                             std::span<const float> x) {
  return objective_impl(data, partition, lambda, x);
}

std::vector<std::size_t> zero_group_ids(std::span<const double> x, const GroupPartition& partition) {
  return zero_ids_impl(x, partition);
}

std::vector<std::size_t> zero_group_ids(std::span<const float> x, const GroupPartition& partition) {
  return zero_ids_impl(x, partition);
}

}  // namespace oto
