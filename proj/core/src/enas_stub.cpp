// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/enas_stub.hpp"

#include "shufflenas/cost.hpp"
#include "shufflenas/nn_ops.hpp"
#include "shufflenas/ops.hpp"

namespace shufflenas {

namespace {

std::string cell_prefix(int index) { return "E" + layer_prefix(index).substr(1); }

}  // namespace

EnasComparisonNet::EnasComparisonNet(const Genotype& genotype, const ModelConfig& config)
    : config_(config), genotype_(genotype) {
  config_.validate();
  require_valid(genotype_);
  if (genotype_.blocks() != config_.blocks)
    throw ConfigError("ENAS stub: genotype B does not match the configuration");

  ParamAllocator alloc(registry_, config_.dtype, config_.seed);
  alloc.conv("stem/conv", config_.filters, config_.input_channels, 3);
  alloc.batch_norm("stem/bn", config_.filters);

  std::int64_t prev = config_.filters, prev_prev = config_.filters;
  bool prev_was_reduction = false;
  for (const auto& layer : layer_plan(config_)) {
    const bool reduction = layer.type == CellType::reduction;
    CellInfo info{layer.type, reduction ? layer.out_channels : layer.in_channels, prev, prev_prev,
                  prev_was_reduction};
    const int i = static_cast<int>(cells_.size());
    const std::string p = cell_prefix(i);
    const std::int64_t C = info.channels;
    alloc.conv(p + "/cal_prev/conv", C, info.prev_channels, 1);
    alloc.batch_norm(p + "/cal_prev/bn", C);
    if (info.reduce_prev_prev) {
      allocate_factorized_reduction(alloc, p + "/cal_pp", info.prev_prev_channels, C);
    } else {
      alloc.conv(p + "/cal_pp/conv", C, info.prev_prev_channels, 1);
      alloc.batch_norm(p + "/cal_pp/bn", C);
    }
    const CellGenotype& cell = reduction ? genotype_.reduction : genotype_.normal;
    for (int b = 1; b <= cell.size(); ++b) {
      const BlockSpec& spec = cell.blocks[static_cast<std::size_t>(b - 1)];
      allocate_candidate_op(alloc, block_key(p + "/a", b, spec.op), spec.op, C,
                            reduction && spec.input_index == 0);
      allocate_candidate_op(alloc, block_key(p + "/b", b, spec.op), spec.op, C, reduction);
    }
    const auto loose = static_cast<std::int64_t>(loose_ends(cell).size());
    alloc.conv(p + "/merge/conv", C, loose * C, 1);
    alloc.batch_norm(p + "/merge/bn", C);
    cells_.push_back(info);
    prev_prev = prev;
    prev = C;
    prev_was_reduction = reduction;
  }
  alloc.dense("head/fc", prev, config_.num_classes);
}

Tensor EnasComparisonNet::run_cell(int index, const CellInfo& info, const Tensor& prev_prev,
                                   const Tensor& prev) {
  const std::string p = cell_prefix(index);
  OpRuntime rt;
  rt.min_pool_kind = config_.min_pool_kind;
  const bool reduction = info.type == CellType::reduction;

  cost::graph_node();
  Tensor in_prev = apply_batch_norm(
      registry_, p + "/cal_prev/bn",
      ops::conv2d(ops::relu(prev), registry_.tensor(p + "/cal_prev/conv"), 1), rt);
  cost::graph_node();
  Tensor in_pp = info.reduce_prev_prev
                     ? factorized_reduction(registry_, p + "/cal_pp", ops::relu(prev_prev), rt)
                     : apply_batch_norm(registry_, p + "/cal_pp/bn",
                                        ops::conv2d(ops::relu(prev_prev),
                                                    registry_.tensor(p + "/cal_pp/conv"), 1),
                                        rt);

  const CellGenotype& cell = reduction ? genotype_.reduction : genotype_.normal;
  std::vector<Tensor> nodes{in_prev};
  for (int b = 1; b <= cell.size(); ++b) {
    const BlockSpec& spec = cell.blocks[static_cast<std::size_t>(b - 1)];
    const int stride_a = reduction && spec.input_index == 0 ? 2 : 1;
    Tensor a = apply_candidate_op(registry_, block_key(p + "/a", b, spec.op), spec.op,
                                  nodes[static_cast<std::size_t>(spec.input_index)], stride_a, rt);
    Tensor c = apply_candidate_op(registry_, block_key(p + "/b", b, spec.op), spec.op, in_pp,
                                  reduction ? 2 : 1, rt);
    nodes.push_back(ops::add(a, c));
  }
  std::vector<Tensor> loose;
  for (int j : loose_ends(cell)) loose.push_back(nodes[static_cast<std::size_t>(j)]);
  cost::graph_node();
  return apply_batch_norm(
      registry_, p + "/merge/bn",
      ops::conv2d(ops::concat_channels(loose), registry_.tensor(p + "/merge/conv"), 1), rt);
}

Tensor EnasComparisonNet::forward(const Tensor& x) {
  OpRuntime rt;
  cost::set_layer(-1);
  Tensor h = apply_batch_norm(registry_, "stem/bn",
                              ops::conv2d(x, registry_.tensor("stem/conv"), 1), rt);
  Tensor prev_prev = h, prev = h;
  for (int i = 0; i < num_cells(); ++i) {
    cost::set_layer(i);
    Tensor out = run_cell(i, cells_[static_cast<std::size_t>(i)], prev_prev, prev);
    prev_prev = prev;
    prev = out;
  }
  cost::set_layer(num_cells());
  Tensor logits = ops::add_row(
      ops::matmul(ops::global_avg_pool(ops::relu(prev)), registry_.tensor("head/fc/w")),
      registry_.tensor("head/fc/b"));
  cost::set_layer(-1);
  return logits;
}

}  // namespace shufflenas
