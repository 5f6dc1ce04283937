// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shufflenas/operation.hpp"
#include "shufflenas/ops.hpp"
#include "shufflenas/parameters.hpp"
#include "shufflenas/rng.hpp"

namespace shufflenas {

/// Execution settings shared by all building blocks of one forward pass.
struct OpRuntime {
  bool training = false;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  /// Pooling executed for the MINPOOL3 slot; average pooling is available
  /// as an alternative reading of the operation set.
  ops::PoolKind min_pool_kind = ops::PoolKind::min;
};

/// Creates parameters in a registry with a fixed dtype and seed.
class ParamAllocator {
 public:
  ParamAllocator(ParameterRegistry& registry, DType dtype, std::uint64_t seed)
      : registry_(&registry), dtype_(dtype), seed_(seed) {}

  void conv(const std::string& key, std::int64_t out, std::int64_t in, std::int64_t kernel);
  void depthwise(const std::string& key, std::int64_t channels, std::int64_t kernel);
  /// gain, bias (trainable) and running mean/variance (buffers).
  void batch_norm(const std::string& key, std::int64_t channels);
  void dense(const std::string& key, std::int64_t in, std::int64_t out);

  ParameterRegistry& registry() { return *registry_; }
  DType dtype() const { return dtype_; }
  std::uint64_t seed() const { return seed_; }

 private:
  ParameterRegistry* registry_;
  DType dtype_;
  std::uint64_t seed_;
};

/// Batch norm whose parameters live in the registry under `key`.
Tensor apply_batch_norm(ParameterRegistry& registry, const std::string& key, const Tensor& x,
                        const OpRuntime& rt);

/// Allocates the weights a candidate operation needs at `channels` width.
/// `may_stride` additionally allocates what the op needs at stride 2
/// (a factorized reduction for IDENTITY).
void allocate_candidate_op(ParamAllocator& alloc, const std::string& key, OperationId op,
                           std::int64_t channels, bool may_stride);

/// Runs a candidate operation. Output channels always equal input channels;
/// stride 2 halves the spatial extent (ceil).
///   SEP3/SEP5: [relu -> depthwise k x k -> pointwise 1x1 -> batch norm] x 2,
///              stride applied in the first repetition
///   CONV1:     relu -> 1x1 -> batch norm
///   MAXPOOL3/MINPOOL3: 3x3 pooling, same padding
///   IDENTITY:  pass-through at stride 1, factorized reduction at stride 2
Tensor apply_candidate_op(ParameterRegistry& registry, const std::string& key, OperationId op,
                          const Tensor& x, int stride, const OpRuntime& rt);

/// Two stride-2 1x1 convolutions, the second on the input shifted by one
/// pixel, each producing half the output channels; concatenated then
/// batch-normalized.
void allocate_factorized_reduction(ParamAllocator& alloc, const std::string& key,
                                   std::int64_t in_channels, std::int64_t out_channels);
Tensor factorized_reduction(ParameterRegistry& registry, const std::string& key, const Tensor& x,
                            const OpRuntime& rt);

enum class BypassMode { factorized, sep3x3, reduction_cell };

std::string_view bypass_mode_name(BypassMode mode);
BypassMode parse_bypass_mode(std::string_view name);

/// Shortcut for the channels that bypass a reduction cell. Handles
/// `factorized` and `sep3x3`; the `reduction_cell` mode runs a second
/// reduction cell and is executed by the network builder.
void allocate_bypass(ParamAllocator& alloc, const std::string& key, BypassMode mode,
                     std::int64_t channels);
Tensor bypass_shortcut(ParameterRegistry& registry, const std::string& key, BypassMode mode,
                       const Tensor& x, const OpRuntime& rt);

std::pair<Tensor, Tensor> channel_split(const Tensor& x);

/// Training: each output is kept with probability keep_prob (per sample)
/// and rescaled by 1/keep_prob; if every output of a sample would be
/// dropped, one of them chosen uniformly is kept. Evaluation: identity.
std::vector<Tensor> drop_path(std::span<const Tensor> outputs, double keep_prob, bool training,
                              Rng& rng);

}  // namespace shufflenas
