// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "shufflenas/tensor.hpp"

namespace shufflenas {

/// Weight initialization schemes.
enum class Init {
  zeros,
  ones,
  he_normal,      // N(0, 2 / fan_in)
  uniform_fan_in, // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  uniform_01,     // U(-0.1, 0.1)
};

struct Parameter {
  std::string id;
  Tensor tensor;
  std::uint64_t update_count = 0;
  /// Buffers (batch-norm running statistics) are stored alongside
  /// parameters but never receive gradients or count towards model size.
  bool trainable = true;
};

/// Ordered map from stable string keys to parameters. Iteration order is the
/// lexicographic key order, so every walk over a registry is deterministic.
class ParameterRegistry {
 public:
  /// Creates a parameter initialized from a stream derived from
  /// (seed, id); identical ids get identical values in any registry built
  /// with the same seed.
  Parameter& create(const std::string& id, const Shape& shape, DType dtype, Init init,
                    std::uint64_t seed, std::int64_t fan_in = 0);
  Parameter& create_buffer(const std::string& id, const Shape& shape, DType dtype,
                           double fill);

  bool contains(const std::string& id) const { return params_.count(id) != 0; }
  Parameter& at(const std::string& id);
  const Parameter& at(const std::string& id) const;
  Tensor& tensor(const std::string& id) { return at(id).tensor; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Total trainable elements.
  std::int64_t trainable_elements() const;
  /// Trainable elements whose key starts with prefix.
  std::int64_t trainable_elements(const std::string& prefix) const;

  void zero_grad();
  /// Global L2 norm over all accumulated gradients.
  double grad_norm() const;

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace shufflenas
