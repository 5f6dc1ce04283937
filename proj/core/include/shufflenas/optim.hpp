// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "shufflenas/checkpoint.hpp"
#include "shufflenas/parameters.hpp"

namespace shufflenas {

struct SgdConfig {
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 5.0;
};

/// Momentum SGD with L2 weight decay added to the gradient. Only parameters
/// that received a gradient are touched.
class Sgd {
 public:
  explicit Sgd(SgdConfig config = {}) : config_(config) {}

  /// Returns the gradient norm before clipping.
  double step(ParameterRegistry& registry, double lr);

  const SgdConfig& config() const { return config_; }
  void save(Checkpoint& checkpoint, const std::string& prefix) const;
  void load(const Checkpoint& checkpoint, const std::string& prefix);

 private:
  SgdConfig config_;
  std::map<std::string, Tensor> velocity_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction; only parameters that received a gradient are
/// touched.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterRegistry& registry, double lr);

  std::int64_t steps() const { return steps_; }
  void save(Checkpoint& checkpoint, const std::string& prefix) const;
  void load(const Checkpoint& checkpoint, const std::string& prefix);

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace shufflenas
