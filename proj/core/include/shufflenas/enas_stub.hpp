// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "shufflenas/genotype.hpp"
#include "shufflenas/parameters.hpp"
#include "shufflenas/supernet.hpp"

namespace shufflenas {

/// Structural stand-in for an ENAS-style network, built only for counting
/// and timing, never trained. Assumptions:
///  - every cell consumes the two preceding cell outputs, each calibrated to
///    the cell width by relu -> 1x1 -> batch norm (a factorized reduction for
///    the older one when its spatial size differs);
///  - each block applies two operations, one to the input the genotype names
///    and one to the older cell input, and sums them (2B operations);
///  - loose ends are concatenated and projected back to the cell width by
///    a 1x1 convolution with batch norm;
///  - cells run on all channels, no split or shuffle; reduction cells run at
///    the doubled width with stride 2 on ops that consume cell inputs.
class EnasComparisonNet {
 public:
  EnasComparisonNet(const Genotype& genotype, const ModelConfig& config);

  EnasComparisonNet(EnasComparisonNet&&) = default;
  EnasComparisonNet(const EnasComparisonNet&) = delete;
  EnasComparisonNet& operator=(const EnasComparisonNet&) = delete;

  Tensor forward(const Tensor& x);

  const ModelConfig& config() const { return config_; }
  const Genotype& genotype() const { return genotype_; }
  const ParameterRegistry& parameters() const { return registry_; }
  int num_cells() const { return static_cast<int>(cells_.size()); }

 private:
  struct CellInfo {
    CellType type;
    std::int64_t channels;
    std::int64_t prev_channels;
    std::int64_t prev_prev_channels;
    bool reduce_prev_prev;  // prev-prev is at twice the spatial size of prev
  };

  Tensor run_cell(int index, const CellInfo& info, const Tensor& prev_prev, const Tensor& prev);

  ModelConfig config_;
  Genotype genotype_;
  std::vector<CellInfo> cells_;
  ParameterRegistry registry_;
};

}  // namespace shufflenas
