// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "shufflenas/data.hpp"

namespace shufflenas::cli {

namespace {

std::string to_string(const std::string& v) { return v; }
std::string to_string(bool v) { return v ? "true" : "false"; }
// Shortest decimal form that reads back to the same double.
std::string to_string(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}
std::string to_string(int v) { return std::to_string(v); }
std::string to_string(std::int64_t v) { return std::to_string(v); }
std::string to_string(std::uint64_t v) { return std::to_string(v); }
std::string to_string(const std::optional<double>& v) { return v ? to_string(*v) : "auto"; }

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("config: bad value '" + s + "' for " + key);
  return v;
}

void from_string(const std::string&, const std::string& s, std::string& v) { v = s; }
void from_string(const std::string& key, const std::string& s, bool& v) {
  if (s == "true") v = true;
  else if (s == "false") v = false;
  else throw ConfigError("config: " + key + " must be true or false, got '" + s + "'");
}
void from_string(const std::string& key, const std::string& s, double& v) { v = parse_number<double>(key, s); }
void from_string(const std::string& key, const std::string& s, int& v) { v = parse_number<int>(key, s); }
void from_string(const std::string& key, const std::string& s, std::int64_t& v) {
  v = parse_number<std::int64_t>(key, s);
}
void from_string(const std::string& key, const std::string& s, std::uint64_t& v) {
  v = parse_number<std::uint64_t>(key, s);
}
void from_string(const std::string& key, const std::string& s, std::optional<double>& v) {
  if (s == "auto") {
    v.reset();
    return;
  }
  double d = 0;
  from_string(key, s, d);
  v = d;
}

template <class Config, class F>
void visit_fields(Config& c, F&& f) {
  f("command", c.command);
  f("blocks", c.blocks);
  f("repeats", c.repeats);
  f("filters", c.filters);
  f("merge", c.merge);
  f("cell_bn", c.cell_bn);
  f("bypass", c.bypass);
  f("drop_path_keep", c.drop_path_keep);
  f("min_pool", c.min_pool);
  f("f64", c.f64);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("lr_max", c.lr_max);
  f("lr_min", c.lr_min);
  f("t0", c.t0);
  f("t_mult", c.t_mult);
  f("cycles", c.cycles);
  f("momentum", c.momentum);
  f("weight_decay", c.weight_decay);
  f("clip_norm", c.clip_norm);
  f("augment", c.augment);
  f("cutout", c.cutout);
  f("controller_samples", c.controller_samples);
  f("weight_phase", c.weight_phase);
  f("controller_lr", c.controller_lr);
  f("entropy_weight", c.entropy_weight);
  f("derive_samples", c.derive_samples);
  f("derive_batches", c.derive_batches);
  f("max_train_batches", c.max_train_batches);
  f("resume", c.resume);
  f("data_dir", c.data_dir);
  f("synthetic", c.synthetic);
  f("synthetic_kind", c.synthetic_kind);
  f("synthetic_train", c.synthetic_train);
  f("synthetic_val", c.synthetic_val);
  f("synthetic_test", c.synthetic_test);
  f("seed", c.seed);
  f("out_dir", c.out_dir);
  f("genotype", c.genotype);
  f("checkpoint", c.checkpoint);
  f("dot", c.dot);
  f("batches", c.batches);
  f("iters", c.iters);
  f("warmup", c.warmup);
  f("compare_enas", c.compare_enas);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void RunConfig::resolve() {
  if (!drop_path_keep) drop_path_keep = cell_bn ? 0.5 : 0.9;
}

void RunConfig::validate() const {
  model_config(10).validate();
  trainer_config().schedule.validate();
  if (epochs < 1) throw ConfigError("--epochs must be >= 1");
  if (controller_samples < 1) throw ConfigError("--controller-samples must be >= 1");
  if (derive_samples < 1) throw ConfigError("--derive-samples must be >= 1");
  if (derive_batches < 1) throw ConfigError("--derive-batches must be >= 1");
  if (weight_phase != "fresh" && weight_phase != "best")
    throw ConfigError("--weight-phase must be 'fresh' or 'best'");
  if (min_pool != "min" && min_pool != "avg") throw ConfigError("--min-pool must be 'min' or 'avg'");
  if (iters < 1) throw ConfigError("--iters must be >= 1");
  if (warmup < 0) throw ConfigError("--warmup must be >= 0");
  try {
    parse_synthetic_kind(synthetic_kind);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("--synthetic-kind: ") + e.what());
  }
  batch_list();
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  visit_fields(*this, [&](const char* key, const auto& value) { os << key << " = " << to_string(value) << "\n"; });
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  visit_fields(c, [&](const char* key, auto& value) {
    auto it = values.find(key);
    if (it == values.end()) return;
    from_string(key, it->second, value);
    values.erase(it);
  });
  if (!values.empty()) throw ConfigError("config: unknown key '" + values.begin()->first + "'");
  return c;
}

ModelConfig RunConfig::model_config(int num_classes) const {
  ModelConfig m;
  m.blocks = blocks;
  m.repeats = repeats;
  m.filters = filters;
  m.num_classes = num_classes;
  try {
    m.merge = parse_merge_mode(merge);
    m.bypass = parse_bypass_mode(bypass);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  m.cell_bn = cell_bn;
  m.drop_path_keep = drop_path_keep;
  m.min_pool_kind = min_pool == "avg" ? ops::PoolKind::avg : ops::PoolKind::min;
  m.dtype = f64 ? DType::f64 : DType::f32;
  m.seed = derive_seed(seed, "model");
  return m;
}

TrainerConfig RunConfig::trainer_config() const {
  TrainerConfig t;
  t.schedule.t0 = t0;
  t.schedule.t_mult = t_mult;
  t.schedule.cycles = cycles;
  t.schedule.lr_max = lr_max;
  t.schedule.lr_min = lr_min;
  t.schedule.batch_size = batch_size;
  t.sgd.momentum = momentum;
  t.sgd.weight_decay = weight_decay;
  t.sgd.clip_norm = clip_norm;
  t.controller.lr = controller_lr;
  t.controller.entropy_weight = entropy_weight;
  t.controller_samples = controller_samples;
  t.weight_genotype = weight_phase == "best" ? WeightPhaseGenotype::best_of_controller_phase
                                              : WeightPhaseGenotype::fresh_sample;
  t.augment = augment;
  t.cutout = cutout;
  t.max_train_batches = max_train_batches;
  t.derive_samples = derive_samples;
  t.derive_batches = derive_batches;
  t.seed = seed;
  return t;
}

std::vector<std::int64_t> RunConfig::batch_list() const {
  std::vector<std::int64_t> out;
  std::istringstream in(batches);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto v = parse_number<std::int64_t>("--batch", trim(item));
    if (v < 1) throw ConfigError("--batch sizes must be >= 1");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--batch needs at least one size");
  return out;
}

}  // namespace shufflenas::cli
