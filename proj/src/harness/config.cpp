#include "oto/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oto/error.hpp"

namespace oto {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "output.dir",
      "model.input", "model.layers", "model.loss", "model.penalize_output",
      "data.kind", "data.seed", "data.groups", "data.group_size", "data.support", "data.samples",
      "data.noise", "data.classes", "data.features", "data.separation", "data.test_fraction",
      "data.images", "data.labels", "data.path",
      "optimizer.kind", "optimizer.alpha0", "optimizer.decay", "optimizer.lambda", "optimizer.epsilon",
      "optimizer.switch_epochs", "optimizer.batch", "optimizer.epochs",
      "prune.verify_inputs", "prune.zig_trials", "prune.keep_one"};
  return keys;
}

Shape parse_shape(const std::string& key, const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty() || v <= 0) {
      throw ConfigError(key + ": '" + text + "' is not a list of positive integers");
    }
    shape.push_back(static_cast<std::size_t>(v));
  }
  if (shape.empty()) throw ConfigError(key + " is empty");
  return shape;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text, const std::string& source) {
  ConfigMap map;
  map.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!map.values_.emplace(key, value).second) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return map;
}

std::optional<std::string> ConfigMap::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || v->empty()) throw ConfigError(source_ + ": " + key + " = '" + *v + "' is not a number");
  return out;
}

std::size_t ConfigMap::get_size(const std::string& key, std::size_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument(*v);
    out = std::stoull(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || v->empty()) {
    throw ConfigError(source_ + ": " + key + " = '" + *v + "' is not a nonnegative integer");
  }
  return static_cast<std::size_t>(out);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(source_ + ": " + key + " = '" + *v + "' is not a boolean");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + " " + why); };
  const TrainConfig& o = optimizer;
  if (!(o.alpha0 > 0.0) || !std::isfinite(o.alpha0)) fail("optimizer.alpha0", "must be > 0");
  if (!(o.decay > 0.0) || !std::isfinite(o.decay)) fail("optimizer.decay", "must be > 0");
  if (!(o.lambda >= 0.0) || !std::isfinite(o.lambda)) fail("optimizer.lambda", "must be >= 0");
  if (!(o.epsilon >= 0.0 && o.epsilon < 1.0)) fail("optimizer.epsilon", "must lie in [0, 1)");
  if (o.batch_size == 0) fail("optimizer.batch", "must be >= 1");
  const std::set<std::string> kinds = {"synthetic-glasso", "synthetic-classify", "idx", "csv"};
  if (!kinds.count(data.kind)) fail("data.kind", "must be one of synthetic-glasso, synthetic-classify, idx, csv");
  if ((data.kind == "synthetic-glasso" || data.kind == "synthetic-classify") && data.samples == 0) {
    fail("data.samples", "must be >= 1");
  }
  if (data.kind == "synthetic-glasso") {
    if (data.groups == 0) fail("data.groups", "must be >= 1");
    if (data.group_size == 0) fail("data.group_size", "must be >= 1");
    if (data.support > data.groups) fail("data.support", "must not exceed data.groups");
    if (!(data.noise >= 0.0)) fail("data.noise", "must be >= 0");
  } else {
    if (model.layers.empty()) fail("model.layers", "is required for classification data");
  }
  if (data.kind == "synthetic-classify") {
    if (data.classes < 2) fail("data.classes", "must be >= 2");
    if (data.features == 0) fail("data.features", "must be >= 1");
    if (!(data.separation >= 0.0)) fail("data.separation", "must be >= 0");
  }
  if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0)) fail("data.test_fraction", "must lie in [0, 1)");
  auto must_exist = [&](const std::string& key, const std::string& path) {
    if (path.empty()) fail(key, "is required for data.kind = " + data.kind);
    if (!std::filesystem::exists(path)) fail(key, "'" + path + "' does not exist");
  };
  if (data.kind == "idx") {
    must_exist("data.images", data.images);
    must_exist("data.labels", data.labels);
  }
  if (data.kind == "csv") must_exist("data.path", data.path);
  if (output_dir.empty()) fail("output.dir", "must not be empty");
}

void ExperimentConfig::override_seed(std::uint64_t s) {
  seed = s;
  optimizer.seed = s;
  if (!data_seed_explicit) data.seed = s;
}

ExperimentConfig parse_experiment(const std::string& text, const std::string& base_dir, const std::string& source) {
  const ConfigMap map = ConfigMap::parse(text, source);
  for (const auto& [key, value] : map.values()) {
    if (!known_keys().count(key)) throw ConfigError(source + ": unknown key '" + key + "'");
  }
  ExperimentConfig c;
  c.seed = map.get_size("seed", 0);
  c.output_dir = resolve(base_dir, map.get_string("output.dir", c.output_dir));

  if (const auto in = map.get("model.input")) c.model.input = parse_shape("model.input", *in);
  c.model.layers = map.get_string("model.layers", "");
  try {
    c.model.loss = parse_loss(map.get_string("model.loss", "cross_entropy"));
  } catch (const Error& e) {
    throw ConfigError(std::string("model.loss: ") + e.what());
  }
  c.model.penalize_output = map.get_bool("model.penalize_output", false);

  DataConfig& d = c.data;
  d.kind = map.get_string("data.kind", d.kind);
  c.data_seed_explicit = map.has("data.seed");
  d.seed = map.get_size("data.seed", c.seed);
  d.groups = map.get_size("data.groups", d.groups);
  d.group_size = map.get_size("data.group_size", d.group_size);
  d.support = map.get_size("data.support", d.support);
  d.samples = map.get_size("data.samples", d.samples);
  d.noise = map.get_double("data.noise", d.noise);
  d.classes = map.get_size("data.classes", d.classes);
  d.features = map.get_size("data.features", d.features);
  d.separation = map.get_double("data.separation", d.separation);
  d.test_fraction = map.get_double("data.test_fraction", d.test_fraction);
  d.images = resolve(base_dir, map.get_string("data.images", ""));
  d.labels = resolve(base_dir, map.get_string("data.labels", ""));
  d.path = resolve(base_dir, map.get_string("data.path", ""));

  TrainConfig& o = c.optimizer;
  try {
    o.optimizer = parse_optimizer(map.get_string("optimizer.kind", "hspg"));
  } catch (const Error& e) {
    throw ConfigError(std::string("optimizer.kind: ") + e.what());
  }
  o.alpha0 = map.get_double("optimizer.alpha0", o.alpha0);
  o.decay = map.get_double("optimizer.decay", o.decay);
  o.lambda = map.get_double("optimizer.lambda", o.lambda);
  o.epsilon = map.get_double("optimizer.epsilon", o.epsilon);
  o.switch_epochs = map.get_size("optimizer.switch_epochs", o.switch_epochs);
  o.batch_size = map.get_size("optimizer.batch", o.batch_size);
  o.epochs = map.get_size("optimizer.epochs", o.epochs);
  o.seed = c.seed;

  c.prune.verify_inputs = map.get_size("prune.verify_inputs", c.prune.verify_inputs);
  c.prune.zig_trials = map.get_size("prune.zig_trials", c.prune.zig_trials);
  c.prune.keep_one = map.get_bool("prune.keep_one", c.prune.keep_one);

  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_experiment(buffer.str(), base, path);
}

}  // namespace oto
