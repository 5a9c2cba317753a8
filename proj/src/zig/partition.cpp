#include "oto/partition.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oto/error.hpp"

namespace oto {

std::string to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::ConvChannel: return "convbn";
    case StructureKind::ResidualChannel: return "residual";
    case StructureKind::LinearRow: return "linear";
    case StructureKind::AttentionRow: return "attention";
    case StructureKind::Generic: return "generic";
  }
  return "unknown";
}

GroupPartition::GroupPartition(std::size_t dimension, std::vector<Group> groups)
    : dimension_(dimension), groups_(std::move(groups)) {
  std::vector<bool> seen(dimension_, false);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& offs = groups_[g].offsets;
    if (offs.empty()) throw InvalidArgument("group " + std::to_string(g) + " is empty");
    for (std::size_t o : offs) {
      if (o >= dimension_) {
        throw InvalidArgument("group " + std::to_string(g) + " offset " + std::to_string(o) +
                              " exceeds dimension " + std::to_string(dimension_));
      }
      if (seen[o]) throw InvalidArgument("flat entry " + std::to_string(o) + " belongs to two groups");
      seen[o] = true;
    }
  }
}

GroupPartition GroupPartition::contiguous(std::size_t count, std::size_t size) {
  if (size == 0) throw InvalidArgument("group size must be positive");
  std::vector<Group> groups(count);
  for (std::size_t g = 0; g < count; ++g) {
    groups[g].tag = {StructureKind::Generic, 0, 0, g};
    for (std::size_t j = 0; j < size; ++j) {
      groups[g].members.push_back({0, g * size + j});
      groups[g].offsets.push_back(g * size + j);
    }
  }
  return GroupPartition(count * size, std::move(groups));
}

std::size_t GroupPartition::penalized_count() const {
  return static_cast<std::size_t>(
      std::count_if(groups_.begin(), groups_.end(), [](const Group& g) { return g.penalized; }));
}

std::vector<std::size_t> GroupPartition::penalized_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].penalized) ids.push_back(g);
  }
  return ids;
}

std::vector<std::size_t> GroupPartition::uncovered() const {
  std::vector<bool> seen(dimension_, false);
  for (const auto& g : groups_) {
    for (std::size_t o : g.offsets) seen[o] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dimension_; ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

std::size_t output_layer_index(const ModelGraph& model) {
  const auto& layers = model.layers();
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (is_compute_layer(layers[i])) return i;
  }
  return static_cast<std::size_t>(-1);
}

namespace {

class GroupCollector {
 public:
  explicit GroupCollector(const ModelGraph& model) : model_(model), offsets_(model.flat_offsets()) {}

  void add_row(Group& g, ArrayId array, std::size_t row) const {
    const Tensor& t = model_.array(array).value;
    const std::size_t width = t.size() / t.extent(0);
    for (std::size_t j = 0; j < width; ++j) add(g, array, row * width + j);
  }

  void add(Group& g, ArrayId array, std::size_t index) const {
    if (offsets_[array] == static_cast<std::size_t>(-1)) {
      throw InvalidModel("array '" + model_.array(array).name + "' is not trainable but is part of a group");
    }
    g.members.push_back({array, index});
    g.offsets.push_back(offsets_[array] + index);
  }

  void add_conv_channel(Group& g, const ConvBNSpec& c, std::size_t channel) const {
    add_row(g, c.kernel, channel);
    add(g, c.bias, channel);
    add(g, c.gamma, channel);
    add(g, c.beta, channel);
  }

 private:
  const ModelGraph& model_;
  std::vector<std::size_t> offsets_;
};

}  // namespace

GroupPartition partition_zig(const ModelGraph& model, const PartitionOptions& options) {
  const GroupCollector collect(model);
  const std::size_t head_layer = output_layer_index(model);
  std::vector<Group> groups;

  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const LayerSpec& layer = model.layers()[li];
    const bool penalized = options.penalize_output_layer || li != head_layer;
    auto make = [&](StructureKind kind, std::size_t head, std::size_t unit) {
      Group g;
      g.tag = {kind, li, head, unit};
      g.penalized = penalized;
      return g;
    };

    if (const auto* l = std::get_if<LinearSpec>(&layer)) {
      for (std::size_t i = 0; i < l->out_features; ++i) {
        Group g = make(StructureKind::LinearRow, 0, i);
        collect.add_row(g, l->weight, i);
        collect.add(g, l->bias, i);
        groups.push_back(std::move(g));
      }
    } else if (const auto* c = std::get_if<ConvBNSpec>(&layer)) {
      for (std::size_t ch = 0; ch < c->out_channels; ++ch) {
        Group g = make(StructureKind::ConvChannel, 0, ch);
        collect.add_conv_channel(g, *c, ch);
        groups.push_back(std::move(g));
      }
    } else if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      if (r->first.out_channels != r->second.out_channels) {
        throw InvalidModel("layer " + std::to_string(li) + ": residual branches have " +
                           std::to_string(r->first.out_channels) + " and " +
                           std::to_string(r->second.out_channels) + " output channels");
      }
      for (std::size_t ch = 0; ch < r->first.out_channels; ++ch) {
        Group g = make(StructureKind::ResidualChannel, 0, ch);
        collect.add_conv_channel(g, r->first, ch);
        collect.add_conv_channel(g, r->second, ch);
        groups.push_back(std::move(g));
      }
    } else if (const auto* a = std::get_if<AttentionSpec>(&layer)) {
      for (std::size_t h = 0; h < a->heads.size(); ++h) {
        for (std::size_t i = 0; i < a->heads[h].rows; ++i) {
          Group g = make(StructureKind::AttentionRow, h, i);
          collect.add_row(g, a->heads[h].weight, i);
          collect.add(g, a->heads[h].bias, i);
          groups.push_back(std::move(g));
        }
      }
    } else if (!std::holds_alternative<ActivationSpec>(layer) && !std::holds_alternative<FlattenSpec>(layer)) {
      throw UnsupportedStructure("layer " + std::to_string(li) + " (" + layer_kind_name(layer) +
                                 ") has no zero-invariant group rule");
    }
  }
  return GroupPartition(model.parameter_count(), std::move(groups));
}

std::string export_partition(const GroupPartition& partition) {
  std::ostringstream out;
  for (std::size_t id = 0; id < partition.size(); ++id) {
    const Group& g = partition.group(id);
    out << id << "\tlayer=" << g.tag.layer << " kind=" << to_string(g.tag.kind);
    if (g.tag.kind == StructureKind::AttentionRow) out << " head=" << g.tag.head;
    out << " unit=" << g.tag.unit << "\tpenalized=" << (g.penalized ? 1 : 0) << "\tsize=" << g.members.size()
        << '\t';
    // Collapse runs of consecutive indices within one array into a-b spans.
    bool first = true;
    for (std::size_t i = 0; i < g.members.size();) {
      std::size_t j = i;
      while (j + 1 < g.members.size() && g.members[j + 1].array == g.members[i].array &&
             g.members[j + 1].index == g.members[j].index + 1) {
        ++j;
      }
      if (!first) out << ' ';
      first = false;
      out << g.members[i].array << ':' << g.members[i].index;
      if (j > i) out << '-' << g.members[j].index;
      i = j + 1;
    }
    out << '\n';
  }
  return out.str();
}

void zero_groups(ModelGraph& model, const GroupPartition& partition, std::span<const std::size_t> ids) {
  for (std::size_t id : ids) {
    for (const ParamIndex& p : partition.group(id).members) {
      Tensor& t = model.array(p.array).value;
      if (p.index >= t.size()) throw InvalidArgument("group member index out of range for its array");
      t[p.index] = 0.0f;
    }
  }
  model.clear_forward_state();
}

double designated_slice_max_abs(const ModelGraph& model, const StructureTag& tag) {
  const Tensor& out = model.layer_output(tag.layer);
  const LayerSpec& layer = model.layers().at(tag.layer);
  double worst = 0.0;
  switch (tag.kind) {
    case StructureKind::ConvChannel:
    case StructureKind::ResidualChannel: {
      // (batch, channels, h, w): every pixel of channel `unit`.
      const std::size_t batch = out.extent(0);
      const std::size_t channels = out.extent(1);
      const std::size_t plane = out.size() / (batch * channels);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = (b * channels + tag.unit) * plane;
        for (std::size_t p = 0; p < plane; ++p) worst = std::max(worst, std::abs(double(out[base + p])));
      }
      break;
    }
    case StructureKind::LinearRow:
    case StructureKind::AttentionRow: {
      std::size_t column = tag.unit;
      if (tag.kind == StructureKind::AttentionRow) {
        column += std::get<AttentionSpec>(layer).head_offset(tag.head);
      }
      const std::size_t width = out.shape().back();
      for (std::size_t r = 0; r < out.size() / width; ++r) {
        worst = std::max(worst, std::abs(double(out[r * width + column])));
      }
      break;
    }
    case StructureKind::Generic:
      throw InvalidArgument("generic groups have no designated output slice");
  }
  return worst;
}

void randomize_parameters(ModelGraph& model, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.5, 2.0);
  std::vector<bool> is_std(model.arrays().size(), false);
  for (const auto& layer : model.layers()) {
    auto mark = [&](const ConvBNSpec& c) { is_std[c.stddev] = true; };
    if (const auto* c = std::get_if<ConvBNSpec>(&layer)) mark(*c);
    if (const auto* r = std::get_if<ResidualSpec>(&layer)) {
      mark(r->first);
      mark(r->second);
    }
  }
  for (ArrayId id = 0; id < model.arrays().size(); ++id) {
    Tensor& t = model.array(id).value;
    for (float& v : t.data()) {
      if (is_std[id]) {
        v = static_cast<float>(spread(rng));
      } else if (model.array(id).trainable) {
        v = static_cast<float>(normal(rng));
      } else {
        v = static_cast<float>(unit(rng));
      }
    }
  }
  model.clear_forward_state();
}

double verify_zero_invariance(const ModelGraph& model, const GroupPartition& partition, std::size_t trials,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::bernoulli_distribution pick(0.5);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    ModelGraph m = model;
    randomize_parameters(m, rng());
    std::vector<std::size_t> chosen;
    for (std::size_t g = 0; g < partition.size(); ++g) {
      if (pick(rng)) chosen.push_back(g);
    }
    zero_groups(m, partition, chosen);

    Shape batch_shape{3};
    batch_shape.insert(batch_shape.end(), m.sample_shape().begin(), m.sample_shape().end());
    Tensor input(batch_shape);
    for (float& v : input.data()) v = normal(rng);
    m.forward(input);
    for (std::size_t g : chosen) worst = std::max(worst, designated_slice_max_abs(m, partition.group(g).tag));
  }
  return worst;
}

}  // namespace oto
