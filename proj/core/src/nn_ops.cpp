// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/nn_ops.hpp"

#include <stdexcept>

#include "shufflenas/cost.hpp"

namespace shufflenas {

namespace {

int sep_kernel(OperationId op) { return op == OperationId::SEP3 ? 3 : 5; }

Tensor sep_conv(ParameterRegistry& reg, const std::string& key, const Tensor& x, int stride,
                const OpRuntime& rt) {
  Tensor y = x;
  for (int r = 0; r < 2; ++r) {
    const std::string sub = key + "/sep" + std::to_string(r);
    y = ops::relu(y);
    y = ops::depthwise_conv2d(y, reg.tensor(sub + "/dw"), r == 0 ? stride : 1);
    y = ops::conv2d(y, reg.tensor(sub + "/pw"), 1);
    y = apply_batch_norm(reg, sub + "/bn", y, rt);
  }
  return y;
}

void allocate_sep(ParamAllocator& alloc, const std::string& key, std::int64_t channels,
                  int kernel) {
  for (int r = 0; r < 2; ++r) {
    const std::string sub = key + "/sep" + std::to_string(r);
    alloc.depthwise(sub + "/dw", channels, kernel);
    alloc.conv(sub + "/pw", channels, channels, 1);
    alloc.batch_norm(sub + "/bn", channels);
  }
}

}  // namespace

void ParamAllocator::conv(const std::string& key, std::int64_t out, std::int64_t in,
                          std::int64_t kernel) {
  registry_->create(key, {out, in, kernel, kernel}, dtype_, Init::he_normal, seed_,
                    in * kernel * kernel);
}

void ParamAllocator::depthwise(const std::string& key, std::int64_t channels,
                               std::int64_t kernel) {
  registry_->create(key, {channels, 1, kernel, kernel}, dtype_, Init::he_normal, seed_,
                    kernel * kernel);
}

void ParamAllocator::batch_norm(const std::string& key, std::int64_t channels) {
  registry_->create(key + "/gain", {channels}, dtype_, Init::ones, seed_);
  registry_->create(key + "/bias", {channels}, dtype_, Init::zeros, seed_);
  registry_->create_buffer(key + "/mean", {channels}, dtype_, 0.0);
  registry_->create_buffer(key + "/var", {channels}, dtype_, 1.0);
}

void ParamAllocator::dense(const std::string& key, std::int64_t in, std::int64_t out) {
  registry_->create(key + "/w", {in, out}, dtype_, Init::uniform_fan_in, seed_, in);
  registry_->create(key + "/b", {out}, dtype_, Init::uniform_fan_in, seed_, in);
}

Tensor apply_batch_norm(ParameterRegistry& registry, const std::string& key, const Tensor& x,
                        const OpRuntime& rt) {
  ops::BatchNormBuffers buffers{registry.tensor(key + "/mean"), registry.tensor(key + "/var")};
  return ops::batch_norm(x, registry.tensor(key + "/gain"), registry.tensor(key + "/bias"),
                         buffers, rt.training, rt.bn_momentum, rt.bn_epsilon);
}

void allocate_candidate_op(ParamAllocator& alloc, const std::string& key, OperationId op,
                           std::int64_t channels, bool may_stride) {
  switch (op) {
    case OperationId::SEP3:
    case OperationId::SEP5:
      allocate_sep(alloc, key, channels, sep_kernel(op));
      return;
    case OperationId::CONV1:
      alloc.conv(key + "/conv", channels, channels, 1);
      alloc.batch_norm(key + "/bn", channels);
      return;
    case OperationId::IDENTITY:
      if (may_stride) allocate_factorized_reduction(alloc, key + "/reduce", channels, channels);
      return;
    case OperationId::MAXPOOL3:
    case OperationId::MINPOOL3:
      return;
  }
  throw std::invalid_argument("allocate_candidate_op: unknown operation code " +
                              std::to_string(operation_code(op)));
}

Tensor apply_candidate_op(ParameterRegistry& registry, const std::string& key, OperationId op,
                          const Tensor& x, int stride, const OpRuntime& rt) {
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("apply_candidate_op: stride must be 1 or 2");
  cost::graph_node();
  switch (op) {
    case OperationId::SEP3:
    case OperationId::SEP5:
      return sep_conv(registry, key, x, stride, rt);
    case OperationId::CONV1: {
      Tensor y = ops::relu(x);
      y = ops::conv2d(y, registry.tensor(key + "/conv"), stride);
      return apply_batch_norm(registry, key + "/bn", y, rt);
    }
    case OperationId::MAXPOOL3:
      return ops::pool2d(x, ops::PoolKind::max, 3, stride);
    case OperationId::MINPOOL3:
      return ops::pool2d(x, rt.min_pool_kind, 3, stride);
    case OperationId::IDENTITY:
      if (stride == 1) return x;
      return factorized_reduction(registry, key + "/reduce", x, rt);
  }
  throw std::invalid_argument("apply_candidate_op: unknown operation code " +
                              std::to_string(operation_code(op)));
}

void allocate_factorized_reduction(ParamAllocator& alloc, const std::string& key,
                                   std::int64_t in_channels, std::int64_t out_channels) {
  if (out_channels % 2 != 0)
    throw std::invalid_argument("factorized_reduction: output channels must be even, got " +
                                std::to_string(out_channels));
  alloc.conv(key + "/path0", out_channels / 2, in_channels, 1);
  alloc.conv(key + "/path1", out_channels / 2, in_channels, 1);
  alloc.batch_norm(key + "/bn", out_channels);
}

Tensor factorized_reduction(ParameterRegistry& registry, const std::string& key, const Tensor& x,
                            const OpRuntime& rt) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2)
    throw std::invalid_argument("factorized_reduction: need spatial extent >= 2, got " +
                                shape_str(x.shape()));
  Tensor a = ops::conv2d(x, registry.tensor(key + "/path0"), 2);
  Tensor b = ops::conv2d(ops::shift_one_pixel(x), registry.tensor(key + "/path1"), 2);
  const Tensor parts[] = {a, b};
  return apply_batch_norm(registry, key + "/bn", ops::concat_channels(parts), rt);
}

std::string_view bypass_mode_name(BypassMode mode) {
  switch (mode) {
    case BypassMode::factorized: return "factorized";
    case BypassMode::sep3x3: return "sep3x3";
    case BypassMode::reduction_cell: return "reduction_cell";
  }
  return "?";
}

BypassMode parse_bypass_mode(std::string_view name) {
  if (name == "factorized") return BypassMode::factorized;
  if (name == "sep3x3") return BypassMode::sep3x3;
  if (name == "reduction_cell") return BypassMode::reduction_cell;
  throw std::invalid_argument("unknown bypass mode '" + std::string(name) +
                              "' (expected factorized, sep3x3 or reduction_cell)");
}

void allocate_bypass(ParamAllocator& alloc, const std::string& key, BypassMode mode,
                     std::int64_t channels) {
  switch (mode) {
    case BypassMode::factorized:
      allocate_factorized_reduction(alloc, key, channels, channels);
      return;
    case BypassMode::sep3x3:
      allocate_sep(alloc, key, channels, 3);
      return;
    case BypassMode::reduction_cell:
      throw std::invalid_argument("allocate_bypass: reduction_cell bypass is a full cell");
  }
  throw std::invalid_argument("allocate_bypass: unknown mode");
}

Tensor bypass_shortcut(ParameterRegistry& registry, const std::string& key, BypassMode mode,
                       const Tensor& x, const OpRuntime& rt) {
  switch (mode) {
    case BypassMode::factorized:
      cost::graph_node();
      return factorized_reduction(registry, key, x, rt);
    case BypassMode::sep3x3:
      cost::graph_node();
      return sep_conv(registry, key, x, 2, rt);
    case BypassMode::reduction_cell:
      throw std::invalid_argument("bypass_shortcut: reduction_cell bypass is a full cell");
  }
  throw std::invalid_argument("bypass_shortcut: unknown mode");
}

std::pair<Tensor, Tensor> channel_split(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) % 2 != 0)
    throw std::invalid_argument("channel_split: channel count must be even, got " +
                                shape_str(x.shape()));
  const auto half = x.dim(1) / 2;
  return {ops::slice_channels(x, 0, half), ops::slice_channels(x, half, half)};
}

std::vector<Tensor> drop_path(std::span<const Tensor> outputs, double keep_prob, bool training,
                              Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw std::invalid_argument("drop_path: keep probability must be in (0, 1], got " +
                                std::to_string(keep_prob));
  std::vector<Tensor> result(outputs.begin(), outputs.end());
  if (!training || keep_prob == 1.0 || outputs.empty()) return result;
  const std::int64_t batch = outputs[0].dim(0);
  const std::size_t paths = outputs.size();
  // factors[path][sample]
  std::vector<std::vector<double>> factors(paths, std::vector<double>(static_cast<std::size_t>(batch)));
  for (std::int64_t n = 0; n < batch; ++n) {
    bool any = false;
    for (std::size_t p = 0; p < paths; ++p) {
      const bool keep = rng.bernoulli(keep_prob);
      factors[p][static_cast<std::size_t>(n)] = keep ? 1.0 / keep_prob : 0.0;
      any = any || keep;
    }
    if (!any) {
      const auto p = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(paths)));
      factors[p][static_cast<std::size_t>(n)] = 1.0 / keep_prob;
    }
  }
  for (std::size_t p = 0; p < paths; ++p) result[p] = ops::scale_per_sample(outputs[p], factors[p]);
  return result;
}

}  // namespace shufflenas
