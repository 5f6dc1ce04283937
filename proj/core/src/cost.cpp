// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/cost.hpp"

namespace shufflenas {

namespace {
thread_local CostCounters* g_counters = nullptr;
}

CostCounters* active_cost_counters() { return g_counters; }

CostScope::CostScope(CostCounters& counters) : previous_(g_counters) {
  g_counters = &counters;
}

CostScope::~CostScope() { g_counters = previous_; }

namespace cost {

void kernel(std::int64_t macs, std::int64_t reads, std::int64_t weight_reads,
            std::int64_t writes) {
  if (!g_counters) return;
  g_counters->macs += macs;
  g_counters->memory_accesses += reads + weight_reads + writes;
  g_counters->layer_macs[g_counters->current_layer] += macs;
}

void elementwise(std::int64_t reads, std::int64_t writes) {
  if (!g_counters) return;
  g_counters->elementwise_ops += 1;
  g_counters->layer_elementwise[g_counters->current_layer] += 1;
  g_counters->memory_accesses += reads + writes;
}

void graph_node() {
  if (!g_counters) return;
  g_counters->graph_nodes += 1;
  g_counters->layer_nodes[g_counters->current_layer] += 1;
}

void set_layer(int layer) {
  if (g_counters) g_counters->current_layer = layer;
}

}  // namespace cost

}  // namespace shufflenas
