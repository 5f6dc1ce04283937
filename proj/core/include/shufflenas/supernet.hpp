// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shufflenas/genotype.hpp"
#include "shufflenas/nn_ops.hpp"
#include "shufflenas/parameters.hpp"
#include "shufflenas/rng.hpp"

namespace shufflenas {

/// Invalid user-facing configuration (the CLI maps it to exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MergeMode { sum, concat_1x1 };

std::string_view merge_mode_name(MergeMode mode);
MergeMode parse_merge_mode(std::string_view name);

struct ModelConfig {
  int blocks = 5;   // B
  int repeats = 5;  // N normal layers per stage
  std::int64_t filters = 32;
  int num_classes = 10;
  MergeMode merge = MergeMode::sum;
  bool cell_bn = false;
  BypassMode bypass = BypassMode::factorized;
  /// Unset: 0.9, or 0.5 when cell_bn is on.
  std::optional<double> drop_path_keep;
  std::int64_t image_size = 32;
  std::int64_t input_channels = 3;
  DType dtype = DType::f32;
  ops::PoolKind min_pool_kind = ops::PoolKind::min;
  std::uint64_t seed = 0;

  static constexpr int kStages = 3;
  static constexpr int kMaxBlocks = 8;

  double keep_prob() const { return drop_path_keep.value_or(cell_bn ? 0.5 : 0.9); }
  int num_layers() const { return kStages * repeats + (kStages - 1); }
  /// Throws ConfigError.
  void validate() const;
};

struct LayerInfo {
  int index = 0;
  CellType type = CellType::normal;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t cell_channels = 0;  // width the cell's ops run at
  std::int64_t in_extent = 0;
  std::int64_t out_extent = 0;
};

std::vector<LayerInfo> layer_plan(const ModelConfig& config);

/// Registry keys.
std::string layer_prefix(int layer);
std::string block_key(const std::string& cell_prefix, int block, OperationId op);

struct ForwardOptions {
  bool training = false;
  /// Drives drop-path; required when training with keep probability < 1.
  Rng* rng = nullptr;
};

/// Stem, 3N normal layers with 2 reduction layers in between, and head.
/// Either a weight-sharing supernet holding every candidate op at every
/// position, or a final model holding only one genotype's ops.
class Network {
 public:
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  // Tensors are shared handles; a copy would silently alias the weights.
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ModelConfig& config() const { return config_; }
  const std::vector<LayerInfo>& layers() const { return layers_; }
  ParameterRegistry& parameters() { return registry_; }
  const ParameterRegistry& parameters() const { return registry_; }
  bool is_supernet() const { return !genotype_.has_value(); }
  /// The genotype of a final model.
  const Genotype& genotype() const;

  /// Logits [batch, num_classes].
  Tensor forward(const Genotype& genotype, const Tensor& x, const ForwardOptions& options = {});
  /// Final models only.
  Tensor forward(const Tensor& x, const ForwardOptions& options = {});

  /// Deterministic text dump: layers, channel/spatial plan, parameter counts.
  std::string describe() const;

  friend Network build_supernet(const ModelConfig& config);
  friend Network build_final_model(const Genotype& genotype, const ModelConfig& config);

 private:
  Network(const ModelConfig& config, std::optional<Genotype> genotype);

  void allocate_layer(const LayerInfo& layer);
  void allocate_cell(const std::string& prefix, const LayerInfo& layer);
  Tensor run_cell(const std::string& prefix, const CellGenotype& cell, const Tensor& x,
                  bool reduction, const OpRuntime& rt, const ForwardOptions& options);

  ModelConfig config_;
  std::optional<Genotype> genotype_;
  std::vector<LayerInfo> layers_;
  ParameterRegistry registry_;
};

Network build_supernet(const ModelConfig& config);
Network build_final_model(const Genotype& genotype, const ModelConfig& config);

}  // namespace shufflenas
