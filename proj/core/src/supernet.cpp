// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/supernet.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "shufflenas/cost.hpp"
#include "shufflenas/ops.hpp"

namespace shufflenas {

std::string_view merge_mode_name(MergeMode mode) {
  return mode == MergeMode::sum ? "sum" : "concat_1x1";
}

MergeMode parse_merge_mode(std::string_view name) {
  if (name == "sum") return MergeMode::sum;
  if (name == "concat_1x1") return MergeMode::concat_1x1;
  throw ConfigError("unknown merge mode '" + std::string(name) +
                    "' (expected sum or concat_1x1)");
}

void ModelConfig::validate() const {
  if (blocks < 1 || blocks > kMaxBlocks)
    throw ConfigError("B must be in [1, " + std::to_string(kMaxBlocks) + "], got " +
                      std::to_string(blocks));
  if (repeats < 1) throw ConfigError("N must be >= 1, got " + std::to_string(repeats));
  if (filters < 4 || filters % 4 != 0)
    throw ConfigError("filters must be a positive multiple of 4, got " + std::to_string(filters));
  if (num_classes < 2)
    throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (image_size < 4)
    throw ConfigError("image size must be >= 4, got " + std::to_string(image_size));
  if (input_channels < 1) throw ConfigError("input channels must be >= 1");
  if (drop_path_keep && !(*drop_path_keep > 0.0 && *drop_path_keep <= 1.0))
    throw ConfigError("drop-path keep probability must be in (0, 1], got " +
                      std::to_string(*drop_path_keep));
}

std::vector<LayerInfo> layer_plan(const ModelConfig& config) {
  config.validate();
  std::vector<LayerInfo> plan;
  std::int64_t channels = config.filters;
  std::int64_t extent = config.image_size;
  int index = 0;
  for (int stage = 0; stage < ModelConfig::kStages; ++stage) {
    if (stage > 0) {
      const std::int64_t out_extent = ops::same_out(extent, 2);
      plan.push_back({index++, CellType::reduction, channels, 2 * channels, channels, extent,
                      out_extent});
      channels *= 2;
      extent = out_extent;
    }
    for (int r = 0; r < config.repeats; ++r)
      plan.push_back({index++, CellType::normal, channels, channels, channels / 2, extent, extent});
  }
  return plan;
}

std::string layer_prefix(int layer) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "L%02d", layer);
  return buf;
}

std::string block_key(const std::string& cell_prefix, int block, OperationId op) {
  return cell_prefix + "/b" + std::to_string(block) + "/" + std::string(operation_name(op));
}

namespace {

std::string merge_key(const std::string& prefix, int block) {
  return prefix + "/merge/b" + std::to_string(block);
}

}  // namespace

Network::Network(const ModelConfig& config, std::optional<Genotype> genotype)
    : config_(config), genotype_(std::move(genotype)), layers_(layer_plan(config)) {
  if (genotype_) {
    require_valid(*genotype_);
    if (genotype_->blocks() != config_.blocks)
      throw ConfigError("genotype has B=" + std::to_string(genotype_->blocks()) +
                        " but the model is configured with B=" + std::to_string(config_.blocks));
  }
  ParamAllocator alloc(registry_, config_.dtype, config_.seed);
  alloc.conv("stem/conv", config_.filters, config_.input_channels, 3);
  alloc.batch_norm("stem/bn", config_.filters);
  for (const auto& layer : layers_) allocate_layer(layer);
  alloc.dense("head/fc", layers_.back().out_channels, config_.num_classes);
}

const Genotype& Network::genotype() const {
  if (!genotype_) throw std::logic_error("supernet has no fixed genotype");
  return *genotype_;
}

void Network::allocate_layer(const LayerInfo& layer) {
  const std::string prefix = layer_prefix(layer.index);
  allocate_cell(prefix, layer);
  if (layer.type == CellType::reduction) {
    if (config_.bypass == BypassMode::reduction_cell) {
      allocate_cell(prefix + "/bypass", layer);
    } else {
      ParamAllocator alloc(registry_, config_.dtype, config_.seed);
      allocate_bypass(alloc, prefix + "/bypass", config_.bypass, layer.in_channels);
    }
  }
}

void Network::allocate_cell(const std::string& prefix, const LayerInfo& layer) {
  ParamAllocator alloc(registry_, config_.dtype, config_.seed);
  const bool reduction = layer.type == CellType::reduction;
  const std::int64_t c = layer.cell_channels;
  std::set<int> merged;
  if (genotype_) {
    const CellGenotype& cell = reduction ? genotype_->reduction : genotype_->normal;
    for (int b = 1; b <= cell.size(); ++b) {
      const BlockSpec& spec = cell.blocks[static_cast<std::size_t>(b - 1)];
      allocate_candidate_op(alloc, block_key(prefix, b, spec.op), spec.op, c,
                            reduction && spec.input_index == 0);
    }
    merged = loose_ends(cell);
  } else {
    for (int b = 1; b <= config_.blocks; ++b) {
      for (OperationId op : kAllOperations)
        allocate_candidate_op(alloc, block_key(prefix, b, op), op, c, reduction);
      merged.insert(b);
    }
  }
  if (config_.merge == MergeMode::concat_1x1) {
    for (int b : merged) alloc.conv(merge_key(prefix, b), c, c, 1);
    alloc.batch_norm(prefix + "/merge/bn", c);
  } else if (config_.cell_bn) {
    alloc.batch_norm(prefix + "/cell_bn", c);
  }
}

Tensor Network::run_cell(const std::string& prefix, const CellGenotype& cell, const Tensor& x,
                         bool reduction, const OpRuntime& rt, const ForwardOptions& options) {
  const int B = cell.size();
  std::vector<Tensor> outputs(static_cast<std::size_t>(B) + 1);
  // Origin of each output through stride-1 identity chains; loose ends are
  // merged in origin order so identity padding leaves the summation order
  // unchanged.
  std::vector<int> origin(static_cast<std::size_t>(B) + 1, 0);
  outputs[0] = x;
  for (int b = 1; b <= B; ++b) {
    const BlockSpec& spec = cell.blocks[static_cast<std::size_t>(b - 1)];
    const auto in = static_cast<std::size_t>(spec.input_index);
    const int stride = reduction && spec.input_index == 0 ? 2 : 1;
    outputs[static_cast<std::size_t>(b)] =
        apply_candidate_op(registry_, block_key(prefix, b, spec.op), spec.op, outputs[in], stride, rt);
    origin[static_cast<std::size_t>(b)] =
        spec.op == OperationId::IDENTITY && stride == 1 && in > 0 ? origin[in] : b;
  }

  const auto loose_set = loose_ends(cell);
  std::vector<int> loose(loose_set.begin(), loose_set.end());
  std::stable_sort(loose.begin(), loose.end(), [&](int a, int b) {
    return origin[static_cast<std::size_t>(a)] < origin[static_cast<std::size_t>(b)];
  });
  std::vector<Tensor> terms;
  for (int j : loose) terms.push_back(outputs[static_cast<std::size_t>(j)]);

  const double keep = config_.keep_prob();
  if (options.training && keep < 1.0) {
    if (!options.rng) throw std::invalid_argument("forward: training with drop-path needs an rng");
    terms = drop_path(terms, keep, true, *options.rng);
  }

  if (config_.merge == MergeMode::concat_1x1) {
    std::vector<Tensor> weights;
    for (int j : loose) weights.push_back(registry_.tensor(merge_key(prefix, j)));
    Tensor merged = ops::conv2d(ops::concat_channels(terms), ops::concat_channels(weights), 1);
    return apply_batch_norm(registry_, prefix + "/merge/bn", merged, rt);
  }
  Tensor merged = terms.size() == 1 ? terms.front() : ops::add_n(terms);
  if (config_.cell_bn) merged = apply_batch_norm(registry_, prefix + "/cell_bn", merged, rt);
  return merged;
}

Tensor Network::forward(const Genotype& genotype, const Tensor& x, const ForwardOptions& options) {
  if (genotype.blocks() != config_.blocks || genotype.reduction.size() != config_.blocks)
    throw std::invalid_argument("forward: genotype has B=" + std::to_string(genotype.blocks()) +
                                ", model expects B=" + std::to_string(config_.blocks));
  require_valid(genotype);
  if (genotype_ && genotype != *genotype_)
    throw std::invalid_argument("forward: final model was built for a different genotype");
  if (x.rank() != 4 || x.dim(1) != config_.input_channels || x.dim(2) != config_.image_size ||
      x.dim(3) != config_.image_size)
    throw std::invalid_argument("forward: expected input [n, " +
                                std::to_string(config_.input_channels) + ", " +
                                std::to_string(config_.image_size) + ", " +
                                std::to_string(config_.image_size) + "], got " +
                                shape_str(x.shape()));
  if (x.dtype() != config_.dtype)
    throw std::invalid_argument("forward: input dtype " + std::string(to_string(x.dtype())) +
                                " does not match model dtype " +
                                std::string(to_string(config_.dtype)));

  OpRuntime rt;
  rt.training = options.training;
  rt.min_pool_kind = config_.min_pool_kind;

  cost::set_layer(-1);
  Tensor h = apply_batch_norm(registry_, "stem/bn", ops::conv2d(x, registry_.tensor("stem/conv"), 1), rt);

  for (const auto& layer : layers_) {
    cost::set_layer(layer.index);
    const std::string prefix = layer_prefix(layer.index);
    if (layer.type == CellType::normal) {
      auto [active, passive] = channel_split(h);
      const Tensor parts[] = {run_cell(prefix, genotype.normal, active, false, rt, options),
                              passive};
      h = ops::channel_shuffle(ops::concat_channels(parts), 2);
    } else {
      Tensor cell_out = run_cell(prefix, genotype.reduction, h, true, rt, options);
      Tensor shortcut =
          config_.bypass == BypassMode::reduction_cell
              ? run_cell(prefix + "/bypass", genotype.reduction, h, true, rt, options)
              : bypass_shortcut(registry_, prefix + "/bypass", config_.bypass, h, rt);
      const Tensor parts[] = {cell_out, shortcut};
      h = ops::channel_shuffle(ops::concat_channels(parts), 2);
    }
  }

  cost::set_layer(static_cast<int>(layers_.size()));
  Tensor pooled = ops::global_avg_pool(ops::relu(h));
  Tensor logits =
      ops::add_row(ops::matmul(pooled, registry_.tensor("head/fc/w")), registry_.tensor("head/fc/b"));
  cost::set_layer(-1);
  return logits;
}

Tensor Network::forward(const Tensor& x, const ForwardOptions& options) {
  return forward(genotype(), x, options);
}

std::string Network::describe() const {
  std::ostringstream os;
  os << "model: " << (is_supernet() ? "supernet" : "final") << " B=" << config_.blocks
     << " N=" << config_.repeats << " f=" << config_.filters << " classes=" << config_.num_classes
     << " merge=" << merge_mode_name(config_.merge) << " cell_bn=" << (config_.cell_bn ? 1 : 0)
     << " bypass=" << bypass_mode_name(config_.bypass) << " dtype=" << to_string(config_.dtype)
     << "\n";
  if (genotype_) {
    os << "genotype " << encode(genotype_->normal) << "\n";
    os << "genotype " << encode(genotype_->reduction) << "\n";
  }
  os << "stem conv3x3 " << config_.input_channels << "->" << config_.filters << " "
     << config_.image_size << "x" << config_.image_size
     << " params=" << registry_.trainable_elements("stem/") << "\n";
  for (const auto& layer : layers_) {
    os << layer_prefix(layer.index) << " " << cell_type_name(layer.type) << " channels "
       << layer.in_channels << "->" << layer.out_channels << " cell " << layer.cell_channels
       << " spatial " << layer.in_extent << "->" << layer.out_extent
       << " params=" << registry_.trainable_elements(layer_prefix(layer.index) + "/") << "\n";
  }
  os << "head fc " << layers_.back().out_channels << "->" << config_.num_classes
     << " params=" << registry_.trainable_elements("head/") << "\n";
  os << "total params=" << registry_.trainable_elements() << "\n";
  return os.str();
}

Network build_supernet(const ModelConfig& config) { return Network(config, std::nullopt); }

Network build_final_model(const Genotype& genotype, const ModelConfig& config) {
  return Network(config, genotype);
}

}  // namespace shufflenas
