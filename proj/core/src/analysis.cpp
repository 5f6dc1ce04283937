// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "shufflenas/cost.hpp"
#include "shufflenas/tape.hpp"

namespace shufflenas {

std::int64_t count_params(const ParameterRegistry& registry) {
  return registry.trainable_elements();
}

std::int64_t count_params(const Network& model) { return count_params(model.parameters()); }

int max_parallel_branches(const CellGenotype& cell) {
  std::vector<int> depth(static_cast<std::size_t>(cell.size()) + 1, 0);
  std::map<int, int> width;
  int best = 0;
  for (int b = 1; b <= cell.size(); ++b) {
    const int d = depth[static_cast<std::size_t>(cell.blocks[static_cast<std::size_t>(b - 1)].input_index)] + 1;
    depth[static_cast<std::size_t>(b)] = d;
    best = std::max(best, ++width[d]);
  }
  return best;
}

namespace {

CostReport measure(const std::function<Tensor(const Tensor&)>& forward, const ModelConfig& config,
                   const ParameterRegistry& registry, std::int64_t batch) {
  if (batch < 1) throw std::invalid_argument("estimate_costs: batch must be >= 1");
  Tensor x = Tensor::zeros({batch, config.input_channels, config.image_size, config.image_size},
                           config.dtype);
  CostCounters counters;
  {
    NoGradScope no_grad;
    CostScope scope(counters);
    forward(x);
  }
  CostReport r;
  r.params = count_params(registry);
  r.flops = counters.macs;
  r.mac = counters.memory_accesses;
  r.nodes = counters.graph_nodes;
  r.elementwise_ops = counters.elementwise_ops;
  r.layer_flops = counters.layer_macs;
  r.layer_nodes = counters.layer_nodes;
  r.layer_elementwise = counters.layer_elementwise;
  return r;
}

}  // namespace

CostReport estimate_costs(Network& model, const Genotype& genotype, std::int64_t batch) {
  CostReport r = measure([&](const Tensor& x) { return model.forward(genotype, x, {}); },
                         model.config(), model.parameters(), batch);
  r.max_parallel_branches =
      std::max(max_parallel_branches(genotype.normal), max_parallel_branches(genotype.reduction));
  return r;
}

CostReport estimate_costs(EnasComparisonNet& model, std::int64_t batch) {
  CostReport r = measure([&](const Tensor& x) { return model.forward(x); }, model.config(),
                         model.parameters(), batch);
  // Both branches of every block run side by side.
  r.max_parallel_branches = 2 * std::max(max_parallel_branches(model.genotype().normal),
                                         max_parallel_branches(model.genotype().reduction));
  return r;
}

std::vector<LatencyStats> latency_benchmark(const std::function<Tensor(const Tensor&)>& forward,
                                            std::int64_t channels, std::int64_t extent,
                                            DType dtype, const std::vector<std::int64_t>& batches,
                                            int iterations, int warmup) {
  if (iterations <= 0) throw std::invalid_argument("latency_benchmark: iterations must be > 0");
  if (warmup < 0) throw std::invalid_argument("latency_benchmark: warm-up must be >= 0");
  NoGradScope no_grad;
  std::vector<LatencyStats> out;
  for (auto batch : batches) {
    if (batch < 1) throw std::invalid_argument("latency_benchmark: batch sizes must be >= 1");
    Tensor x = Tensor::zeros({batch, channels, extent, extent}, dtype);
    Rng rng(derive_seed(0, "benchmark/input"));
    for (std::int64_t i = 0; i < x.numel(); ++i) x.set(i, rng.normal());
    for (int i = 0; i < warmup; ++i) forward(x);
    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(iterations));
    for (int i = 0; i < iterations; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      forward(x);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    LatencyStats s;
    s.batch = batch;
    s.iterations = iterations;
    for (double v : ms) s.mean_ms += v / static_cast<double>(ms.size());
    const std::size_t n = ms.size();
    s.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    s.p95_ms = ms[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
    out.push_back(s);
  }
  return out;
}

std::string cost_csv_header() {
  return "model,batch,f,N,B,params,flops,mac,nodes,elementwise,median_ms,mean_ms,p95_ms";
}

std::string cost_csv_row(const std::string& model, const ModelConfig& config,
                         const CostReport& report, const LatencyStats& latency) {
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.4f,%.4f,%.4f", latency.median_ms, latency.mean_ms,
                latency.p95_ms);
  std::ostringstream os;
  os << model << "," << latency.batch << "," << config.filters << "," << config.repeats << ","
     << config.blocks << "," << report.params << "," << report.flops << "," << report.mac << ","
     << report.nodes << "," << report.elementwise_ops << "," << timing;
  return os.str();
}

namespace {

void emit_cell_body(std::ostringstream& os, const CellGenotype& cell, MergeMode merge,
                    const std::string& id, const std::string& indent) {
  const auto loose = loose_ends(cell);
  os << indent << id << "in [label=\"input\", shape=box];\n";
  for (int b = 1; b <= cell.size(); ++b) {
    os << indent << id << "b" << b << " [label=\"" << b << ": "
       << operation_name(cell.blocks[static_cast<std::size_t>(b - 1)].op) << "\"";
    if (loose.count(b)) os << ", peripheries=2";
    os << "];\n";
  }
  os << indent << id << "out [label=\"" << (merge == MergeMode::sum ? "sum" : "concat + 1x1")
     << "\", shape=box];\n";
  for (int b = 1; b <= cell.size(); ++b) {
    const int src = cell.blocks[static_cast<std::size_t>(b - 1)].input_index;
    os << indent << id << (src == 0 ? std::string("in") : "b" + std::to_string(src)) << " -> "
       << id << "b" << b << ";\n";
  }
  for (int b : loose) os << indent << id << "b" << b << " -> " << id << "out;\n";
}

}  // namespace

std::string emit_graph(const CellGenotype& cell, MergeMode merge) {
  std::ostringstream os;
  os << "digraph " << cell_type_name(cell.type) << " {\n  rankdir=LR;\n";
  emit_cell_body(os, cell, merge, "", "  ");
  os << "}\n";
  return os.str();
}

std::string emit_graph(const Genotype& genotype, MergeMode merge) {
  std::ostringstream os;
  os << "digraph genotype {\n  rankdir=LR;\n";
  for (const CellGenotype* cell : {&genotype.normal, &genotype.reduction}) {
    const std::string name(cell_type_name(cell->type));
    os << "  subgraph cluster_" << name << " {\n    label=\"" << name << "\";\n";
    emit_cell_body(os, *cell, merge, name.substr(0, 1) + "_", "    ");
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

std::string emit_model_graph(const Network& model) {
  const auto& cfg = model.config();
  std::ostringstream os;
  os << "digraph model {\n  rankdir=TB;\n";
  os << "  stem [label=\"stem 3x3 conv\\n" << cfg.filters << " ch, " << cfg.image_size << "x"
     << cfg.image_size << "\", shape=box];\n";
  std::string prev = "stem";
  for (const auto& layer : model.layers()) {
    const std::string id = layer_prefix(layer.index);
    os << "  " << id << " [label=\"" << id << " " << cell_type_name(layer.type) << "\\n"
       << layer.in_channels << "->" << layer.out_channels << " ch, " << layer.out_extent << "x"
       << layer.out_extent << "\"];\n";
    os << "  " << prev << " -> " << id << ";\n";
    prev = id;
  }
  os << "  head [label=\"avg pool + fc\\n" << cfg.num_classes << " classes\", shape=box];\n";
  os << "  " << prev << " -> head;\n}\n";
  return os.str();
}

}  // namespace shufflenas
