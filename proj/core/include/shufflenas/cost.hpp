// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace shufflenas {

/// Counters filled by kernels while a CostScope is active in this thread.
///
/// Memory-access convention: every kernel invocation reads each input
/// element once, reads each weight element once and writes each output
/// element once.
struct CostCounters {
  std::int64_t macs = 0;
  std::int64_t memory_accesses = 0;
  std::int64_t elementwise_ops = 0;
  std::int64_t graph_nodes = 0;
  /// MACs attributed to the layer label current at the time of the kernel.
  std::map<int, std::int64_t> layer_macs;
  std::map<int, std::int64_t> layer_nodes;
  std::map<int, std::int64_t> layer_elementwise;
  int current_layer = -1;
};

CostCounters* active_cost_counters();

class CostScope {
 public:
  explicit CostScope(CostCounters& counters);
  ~CostScope();
  CostScope(const CostScope&) = delete;
  CostScope& operator=(const CostScope&) = delete;

 private:
  CostCounters* previous_;
};

namespace cost {

void kernel(std::int64_t macs, std::int64_t reads, std::int64_t weight_reads,
            std::int64_t writes);
void elementwise(std::int64_t reads, std::int64_t writes);
/// A node of the architecture graph (candidate op, bypass, merge conv...).
void graph_node();
void set_layer(int layer);

}  // namespace cost

}  // namespace shufflenas
