#include "oto/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include <json.hpp>

#include "oto/error.hpp"
#include "oto/regularizers.hpp"

namespace oto {

namespace {

std::uint64_t conv_flops(const ConvBNSpec& c, const Shape& out) {
  const std::uint64_t plane = out[1] * out[2];
  return std::uint64_t(c.out_channels) * c.row_length() * plane + std::uint64_t(c.out_channels) * plane;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<std::size_t> kept_from_mask(const std::vector<bool>& removed) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < removed.size(); ++i) {
    if (!removed[i]) kept.push_back(i);
  }
  return kept;
}

// Which units of the current activation are still alive, and whether they
// index channels of a (C, H, W) map or features of the last axis.
struct Alive {
  std::vector<std::size_t> units;
  std::size_t width = 0;
  bool channels = false;

  bool complete() const { return units.size() == width; }
};

struct Slice {
  std::optional<std::vector<std::size_t>> rows;
  std::optional<std::vector<std::size_t>> cols;
};

Tensor slice_array(const Tensor& t, const Slice& s) {
  if (t.rank() == 1) {
    if (!s.rows) return t;
    Tensor out({s.rows->size()});
    for (std::size_t i = 0; i < s.rows->size(); ++i) out[i] = t[(*s.rows)[i]];
    return out;
  }
  if (t.rank() != 2) throw InvalidModel("cannot slice parameter array of rank " + std::to_string(t.rank()));
  const std::size_t cols = t.extent(1);
  const std::vector<std::size_t> rows = s.rows ? *s.rows : iota_vec(t.extent(0));
  const std::vector<std::size_t> keep_cols = s.cols ? *s.cols : iota_vec(cols);
  Tensor out({rows.size(), keep_cols.size()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < keep_cols.size(); ++c) out[r * keep_cols.size() + c] = t[rows[r] * cols + keep_cols[c]];
  }
  return out;
}

std::vector<std::size_t> conv_columns(const Alive& in, const ConvBNSpec& c) {
  const std::size_t span = c.kernel_h * c.kernel_w;
  std::vector<std::size_t> cols;
  for (std::size_t ch : in.units) {
    for (std::size_t t = 0; t < span; ++t) cols.push_back(ch * span + t);
  }
  return cols;
}

}  // namespace

FlopsParams count_flops_params(const ModelGraph& model) {
  FlopsParams out;
  for (const auto& a : model.arrays()) {
    out.stored += a.value.size();
    if (a.trainable) out.params += a.value.size();
  }
  const std::vector<Shape> shapes = model.layer_output_shapes();
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerSpec& layer = model.layers()[i];
    if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      // Leading per-sample axes (if any) repeat the matmul.
      std::uint64_t repeat = 1;
      for (std::size_t k = 0; k + 1 < shapes[i].size(); ++k) repeat *= shapes[i][k];
      out.flops += repeat * l->out_features * l->in_features;
    } else if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
      out.flops += conv_flops(*c, shapes[i]);
    } else if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      out.flops += conv_flops(r->first, shapes[i]) + conv_flops(r->second, shapes[i]);
    } else if (const auto* a = std::get_if<AttentionSpec>(&layer)) {
      std::uint64_t repeat = 1;
      for (std::size_t k = 0; k + 1 < shapes[i].size(); ++k) repeat *= shapes[i][k];
      for (const auto& h : a->heads) out.flops += repeat * h.rows * a->in_features;
    }
  }
  return out;
}

std::string PruneReport::to_jsonl() const {
  nlohmann::ordered_json summary;
  summary["record"] = "summary";
  summary["zero_groups"] = zero_groups;
  summary["retained_groups"] = retained_groups;
  summary["params_before"] = before.params;
  summary["params_after"] = after.params;
  summary["stored_before"] = before.stored;
  summary["stored_after"] = after.stored;
  summary["flops_before"] = before.flops;
  summary["flops_after"] = after.flops;
  summary["flops_ratio"] = before.flops == 0 ? 1.0 : double(after.flops) / double(before.flops);
  summary["params_ratio"] = before.params == 0 ? 1.0 : double(after.params) / double(before.params);
  summary["removed_group_params"] = removed_group_params;
  summary["removed_input_params"] = removed_input_params;
  summary["max_deviation"] = max_deviation;
  summary["slim_model"] = slim_description;
  std::string out = summary.dump() + "\n";
  for (const LayerMap& m : layer_maps) {
    nlohmann::ordered_json j;
    j["record"] = "layer";
    j["layer"] = m.layer;
    j["old_width"] = m.old_width;
    j["new_width"] = m.kept.size();
    j["kept"] = m.kept;
    out += j.dump() + "\n";
  }
  return out;
}

std::pair<ModelGraph, PruneReport> prune_groups(const ModelGraph& model, const GroupPartition& partition,
                                                std::span<const std::size_t> group_ids,
                                                const PruneOptions& options) {
  model.validate();
  if (partition.dimension() != model.parameter_count()) {
    throw InvalidArgument("partition does not belong to this model (dimension mismatch)");
  }
  const auto& layers = model.layers();
  const std::size_t head_layer = output_layer_index(model);

  // removed[layer][head][unit]
  std::vector<std::vector<std::vector<bool>>> removed(layers.size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (const auto* l = std::get_if<LinearSpec>(&layers[li])) {
      removed[li].assign(1, std::vector<bool>(l->out_features, false));
    } else if (const auto* c = std::get_if<ConvBNSpec>(&layers[li])) {
      removed[li].assign(1, std::vector<bool>(c->out_channels, false));
    } else if (const auto* r = std::get_if<ResidualSpec>(&layers[li])) {
      removed[li].assign(1, std::vector<bool>(r->first.out_channels, false));
    } else if (const auto* a = std::get_if<AttentionSpec>(&layers[li])) {
      for (const auto& h : a->heads) removed[li].push_back(std::vector<bool>(h.rows, false));
    }
  }
  std::vector<std::vector<std::vector<std::size_t>>> owner(layers.size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (const auto& mask : removed[li]) owner[li].push_back(std::vector<std::size_t>(mask.size(), 0));
  }
  for (std::size_t g = 0; g < partition.size(); ++g) {
    const StructureTag& t = partition.group(g).tag;
    if (t.kind == StructureKind::Generic || t.layer >= layers.size() || t.head >= owner[t.layer].size() ||
        t.unit >= owner[t.layer][t.head].size()) {
      throw InvalidArgument("group " + std::to_string(g) + " does not describe a unit of this model");
    }
    owner[t.layer][t.head][t.unit] = g;
  }

  std::vector<bool> selected(partition.size(), false);
  for (std::size_t g : group_ids) {
    if (g >= partition.size()) throw InvalidArgument("group id " + std::to_string(g) + " out of range");
    const StructureTag& t = partition.group(g).tag;
    if (t.layer == head_layer) {
      throw InvalidArgument("group " + std::to_string(g) + " belongs to the output layer and cannot be pruned");
    }
    selected[g] = true;
    removed[t.layer][t.head][t.unit] = true;
  }
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t h = 0; h < removed[li].size(); ++h) {
      auto& mask = removed[li][h];
      if (mask.empty() || std::find(mask.begin(), mask.end(), false) != mask.end()) continue;
      if (!options.keep_one) {
        throw DegenerateLayer("layer " + std::to_string(li) + " (" + layer_kind_name(layers[li]) + ")" +
                              (removed[li].size() > 1 ? " head " + std::to_string(h) : std::string()) +
                              ": all " + std::to_string(mask.size()) +
                              " groups are zero, pruning would leave width 0; enable the keep-one policy "
                              "(prune.keep_one = true) to retain a single group");
      }
      mask[0] = false;
      selected[owner[li][h][0]] = false;
    }
  }

  PruneReport report;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (selected[g]) {
      report.zero_groups.push_back(g);
      report.removed_group_params += partition.group(g).members.size();
    } else if (partition.penalized(g)) {
      report.retained_groups.push_back(g);
    }
  }

  std::vector<Slice> slices(model.arrays().size());
  std::vector<LayerSpec> new_layers;
  const std::vector<Shape> shapes = model.layer_output_shapes();
  Alive alive;
  {
    const Shape& s = model.sample_shape();
    alive.channels = s.size() == 3;
    alive.width = s.empty() ? 0 : (alive.channels ? s[0] : s.back());
    alive.units = iota_vec(alive.width);
  }
  // Surviving consumer rows lose the columns of removed producer units.
  auto note_input_removal = [&](std::size_t kept_rows, std::size_t old_cols, std::size_t new_cols) {
    report.removed_input_params += std::uint64_t(kept_rows) * (old_cols - new_cols);
  };
  auto prune_conv = [&](ConvBNSpec c, const std::vector<std::size_t>& rows) {
    const std::vector<std::size_t> cols = conv_columns(alive, c);
    slices[c.kernel] = {rows, cols};
    for (ArrayId id : {c.bias, c.mean, c.stddev, c.gamma, c.beta}) slices[id] = {rows, std::nullopt};
    note_input_removal(rows.size(), c.row_length(), cols.size());
    c.out_channels = rows.size();
    c.in_channels = alive.units.size();
    return c;
  };

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& layer = layers[li];
    const bool wants_channels =
        std::holds_alternative<ConvBNSpec>(layer) || std::holds_alternative<ResidualSpec>(layer);
    if (is_compute_layer(layer) && wants_channels != alive.channels && !alive.complete()) {
      throw UnsupportedStructure("layer " + std::to_string(li) + " consumes a pruned " +
                                 (alive.channels ? "feature map" : "feature vector") +
                                 " along an axis the pruner cannot map");
    }
    if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      LinearSpec s = *l;
      const std::vector<std::size_t> rows = kept_from_mask(removed[li][0]);
      const std::vector<std::size_t> cols = alive.channels ? iota_vec(s.in_features) : alive.units;
      slices[s.weight] = {rows, cols};
      slices[s.bias] = {rows, std::nullopt};
      note_input_removal(rows.size(), s.in_features, cols.size());
      report.layer_maps.push_back({li, s.out_features, rows});
      s.out_features = rows.size();
      s.in_features = cols.size();
      new_layers.push_back(s);
      alive = {rows, l->out_features, false};
    } else if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
      const std::vector<std::size_t> rows = kept_from_mask(removed[li][0]);
      report.layer_maps.push_back({li, c->out_channels, rows});
      new_layers.push_back(prune_conv(*c, rows));
      alive = {rows, c->out_channels, true};
    } else if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      const std::vector<std::size_t> rows = kept_from_mask(removed[li][0]);
      report.layer_maps.push_back({li, r->first.out_channels, rows});
      ResidualSpec s{prune_conv(r->first, rows), prune_conv(r->second, rows)};
      new_layers.push_back(s);
      alive = {rows, r->first.out_channels, true};
    } else if (const auto* a = std::get_if<AttentionSpec>(&layer)) {
      AttentionSpec s = *a;
      const std::vector<std::size_t> cols = alive.channels ? iota_vec(s.in_features) : alive.units;
      std::vector<std::size_t> concat;
      for (std::size_t h = 0; h < s.heads.size(); ++h) {
        const std::vector<std::size_t> rows = kept_from_mask(removed[li][h]);
        slices[s.heads[h].weight] = {rows, cols};
        slices[s.heads[h].bias] = {rows, std::nullopt};
        note_input_removal(rows.size(), s.in_features, cols.size());
        for (std::size_t row : rows) concat.push_back(a->head_offset(h) + row);
        s.heads[h].rows = rows.size();
      }
      s.in_features = cols.size();
      report.layer_maps.push_back({li, a->out_features(), concat});
      new_layers.push_back(s);
      alive = {concat, a->out_features(), false};
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      new_layers.push_back(layer);
      if (alive.channels) {
        const Shape& in = li == 0 ? model.sample_shape() : shapes[li - 1];
        const std::size_t plane = in[1] * in[2];
        Alive flat{{}, alive.width * plane, false};
        for (std::size_t ch : alive.units) {
          for (std::size_t j = 0; j < plane; ++j) flat.units.push_back(ch * plane + j);
        }
        alive = std::move(flat);
      }
    } else {
      new_layers.push_back(layer);
    }
  }

  ModelGraph slim(model.sample_shape(), model.loss());
  for (ArrayId id = 0; id < model.arrays().size(); ++id) {
    const auto& a = model.arrays()[id];
    slim.add_array(a.name, slice_array(a.value, slices[id]), a.trainable);
  }
  for (auto& l : new_layers) slim.add_layer(std::move(l));
  slim.validate();

  report.before = count_flops_params(model);
  report.after = count_flops_params(slim);
  report.slim_description = slim.describe();
  return {std::move(slim), std::move(report)};
}

std::pair<ModelGraph, PruneReport> prune(const ModelGraph& model, const GroupPartition& partition,
                                         const PruneOptions& options) {
  const std::vector<float> x = model.flat_parameters();
  if (x.size() != partition.dimension()) {
    throw InvalidArgument("partition does not belong to this model (dimension mismatch)");
  }
  const std::size_t head_layer = output_layer_index(model);
  std::vector<std::size_t> ids;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (!partition.penalized(g) || partition.group(g).tag.layer == head_layer) continue;
    if (group_is_zero(x, partition.offsets(g))) ids.push_back(g);
  }
  return prune_groups(model, partition, ids, options);
}

double equivalence_check(const ModelGraph& full, const ModelGraph& slim, std::size_t inputs, std::uint64_t seed) {
  if (full.sample_shape() != slim.sample_shape()) {
    throw StructuralError("input shapes differ: " + shape_to_string(full.sample_shape()) + " vs " +
                          shape_to_string(slim.sample_shape()));
  }
  if (full.output_shape() != slim.output_shape()) {
    throw StructuralError("output shapes differ: " + shape_to_string(full.output_shape()) + " vs " +
                          shape_to_string(slim.output_shape()));
  }
  if (inputs == 0) return 0.0;
  ModelGraph a = full;
  ModelGraph b = slim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  double worst = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < inputs; start += kChunk) {
    Shape shape{std::min(kChunk, inputs - start)};
    shape.insert(shape.end(), full.sample_shape().begin(), full.sample_shape().end());
    Tensor x(shape);
    for (float& v : x.data()) v = normal(rng);
    const Tensor ya = a.forward(x).output;
    const Tensor yb = b.forward(x).output;
    for (std::size_t i = 0; i < ya.size(); ++i) worst = std::max(worst, std::abs(double(ya[i]) - double(yb[i])));
  }
  return worst;
}

}  // namespace oto
