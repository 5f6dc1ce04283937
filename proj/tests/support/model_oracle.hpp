// SPDX-License-Identifier: Apache-2.0
// Independent model-level oracles shared by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shufflenas/genotype.hpp"
#include "shufflenas/ops.hpp"
#include "shufflenas/optim.hpp"
#include "shufflenas/supernet.hpp"
#include "shufflenas/tape.hpp"
#include "test_util.hpp"

namespace shufflenas::testing {

// Closed-form parameter counts written from the operation definitions.
inline std::int64_t sep_params(std::int64_t k, std::int64_t c) { return 2 * (k * k * c + c * c + 2 * c); }
inline std::int64_t conv1_params(std::int64_t c) { return c * c + 2 * c; }
inline std::int64_t fr_params(std::int64_t c, std::int64_t out) { return c * out + 2 * out; }

inline std::int64_t op_params(OperationId op, std::int64_t c, bool strided_identity) {
  switch (op) {
    case OperationId::SEP3: return sep_params(3, c);
    case OperationId::SEP5: return sep_params(5, c);
    case OperationId::CONV1: return conv1_params(c);
    case OperationId::IDENTITY: return strided_identity ? fr_params(c, c) : 0;
    default: return 0;
  }
}

/// Parameters of one cell at width c. A null cell means the supernet: every
/// op at every block, with strided identities everywhere in reduction cells.
inline std::int64_t cell_params_oracle(const ModelConfig& cfg, const CellGenotype* cell, bool reduction,
                                       std::int64_t c) {
  std::int64_t n = 0;
  std::int64_t merged = 0;
  if (cell) {
    for (const auto& b : cell->blocks) n += op_params(b.op, c, reduction && b.input_index == 0);
    merged = static_cast<std::int64_t>(loose_ends(*cell).size());
  } else {
    for (int b = 0; b < cfg.blocks; ++b)
      for (OperationId op : kAllOperations) n += op_params(op, c, reduction);
    merged = cfg.blocks;
  }
  if (cfg.merge == MergeMode::concat_1x1)
    n += merged * c * c + 2 * c;
  else if (cfg.cell_bn)
    n += 2 * c;
  return n;
}

/// Whole-model trainable parameter count, from the channel plan alone.
inline std::int64_t model_params_oracle(const ModelConfig& cfg, const Genotype* g) {
  std::int64_t n = cfg.input_channels * 9 * cfg.filters + 2 * cfg.filters;
  std::int64_t ch = cfg.filters;
  for (int stage = 0; stage < ModelConfig::kStages; ++stage) {
    for (int i = 0; i < cfg.repeats; ++i) n += cell_params_oracle(cfg, g ? &g->normal : nullptr, false, ch / 2);
    if (stage + 1 == ModelConfig::kStages) break;
    const auto* red = g ? &g->reduction : nullptr;
    n += cell_params_oracle(cfg, red, true, ch);
    switch (cfg.bypass) {
      case BypassMode::factorized: n += fr_params(ch, ch); break;
      case BypassMode::sep3x3: n += sep_params(3, ch); break;
      case BypassMode::reduction_cell: n += cell_params_oracle(cfg, red, true, ch); break;
    }
    ch *= 2;
  }
  return n + ch * cfg.num_classes + cfg.num_classes;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  if (x.size() != y.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

/// Evaluation-mode logits of g on a supernet with B = g's B versus
/// embed(g, target) on a supernet with B = target; same seed, so every
/// shared key starts from identical weights.
inline double containment_gap(const Genotype& g, int target, ModelConfig cfg, const Tensor& x) {
  cfg.blocks = g.blocks();
  Network small = build_supernet(cfg);
  cfg.blocks = target;
  Network large = build_supernet(cfg);
  NoGradScope no_grad;
  return max_abs_diff(small.forward(g, x), large.forward(embed(g, target), x));
}

inline Tensor random_images(const ModelConfig& cfg, std::int64_t batch, Rng& rng) {
  return random_tensor({batch, cfg.input_channels, cfg.image_size, cfg.image_size}, rng, cfg.dtype);
}

/// One SGD step of cross-entropy on (x, labels); returns the loss.
inline double sgd_step(Network& net, const Genotype& g, const Tensor& x, const std::vector<int>& labels,
                       Sgd& sgd, double lr, Rng& rng) {
  net.parameters().zero_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng;
    loss = ops::softmax_cross_entropy(net.forward(g, x, opts), labels);
  }
  tape.backward(loss);
  sgd.step(net.parameters(), lr);
  return loss.item();
}

}  // namespace shufflenas::testing
