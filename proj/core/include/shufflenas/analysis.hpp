// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shufflenas/enas_stub.hpp"
#include "shufflenas/genotype.hpp"
#include "shufflenas/supernet.hpp"

namespace shufflenas {

/// Exact number of trainable scalars (batch-norm running statistics are
/// buffers and not counted).
std::int64_t count_params(const ParameterRegistry& registry);
std::int64_t count_params(const Network& model);

/// Costs of one forward pass.
///   flops: multiply-accumulates (conv H'W'·Cin·Cout·k², depthwise H'W'·C·k²,
///          dense in·out)
///   mac:   memory accesses, each activation and weight element touched once
///          per kernel that reads or writes it
///   nodes: operation nodes (candidate ops, shortcuts, calibrations)
///   elementwise_ops: element-wise kernel invocations (add, relu, bias, ...)
struct CostReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t mac = 0;
  std::int64_t nodes = 0;
  std::int64_t max_parallel_branches = 0;
  std::int64_t elementwise_ops = 0;
  /// Per layer (-1 = stem, last = head).
  std::map<int, std::int64_t> layer_flops;
  std::map<int, std::int64_t> layer_nodes;
  std::map<int, std::int64_t> layer_elementwise;
};

/// Largest number of blocks at equal depth from the cell input.
int max_parallel_branches(const CellGenotype& cell);

CostReport estimate_costs(Network& model, const Genotype& genotype, std::int64_t batch = 1);
CostReport estimate_costs(EnasComparisonNet& model, std::int64_t batch = 1);

struct LatencyStats {
  std::int64_t batch = 0;
  int iterations = 0;
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
};

inline constexpr int kWarmupIterations = 50;

/// Times `forward` on a fixed random input of shape [batch, c, h, w] for each
/// batch size: warm-up passes first, then `iterations` timed passes.
std::vector<LatencyStats> latency_benchmark(const std::function<Tensor(const Tensor&)>& forward,
                                            std::int64_t channels, std::int64_t extent,
                                            DType dtype, const std::vector<std::int64_t>& batches,
                                            int iterations, int warmup = kWarmupIterations);

std::string cost_csv_header();
std::string cost_csv_row(const std::string& model, const ModelConfig& config,
                         const CostReport& report, const LatencyStats& latency);

/// DOT graph of one cell: input, one node per block, output merge; loose
/// ends drawn with a double border.
std::string emit_graph(const CellGenotype& cell, MergeMode merge = MergeMode::sum);
/// Both cells as clusters of one digraph.
std::string emit_graph(const Genotype& genotype, MergeMode merge = MergeMode::sum);
/// Macro layout: stem, layers with channel/spatial plan, head.
std::string emit_model_graph(const Network& model);

}  // namespace shufflenas
