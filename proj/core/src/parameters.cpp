// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/parameters.hpp"

#include <cmath>
#include <stdexcept>

#include "shufflenas/rng.hpp"

namespace shufflenas {

Parameter& ParameterRegistry::create(const std::string& id, const Shape& shape, DType dtype,
                                     Init init, std::uint64_t seed, std::int64_t fan_in) {
  if (contains(id)) throw std::invalid_argument("duplicate parameter id '" + id + "'");
  Tensor t = Tensor::zeros(shape, dtype, true);
  if (fan_in <= 0 && shape.size() > 1) fan_in = numel_of(shape) / shape[0];
  if (fan_in <= 0) fan_in = 1;
  Rng rng(derive_seed(seed, id));
  const auto n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    double v = 0;
    switch (init) {
      case Init::zeros: v = 0; break;
      case Init::ones: v = 1; break;
      case Init::he_normal: v = rng.normal() * std::sqrt(2.0 / static_cast<double>(fan_in)); break;
      case Init::uniform_fan_in: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        v = rng.uniform(-bound, bound);
        break;
      }
      case Init::uniform_01: v = rng.uniform(-0.1, 0.1); break;
    }
    t.set(i, v);
  }
  auto [it, inserted] = params_.emplace(id, Parameter{id, t, 0, true});
  return it->second;
}

Parameter& ParameterRegistry::create_buffer(const std::string& id, const Shape& shape,
                                            DType dtype, double fill) {
  if (contains(id)) throw std::invalid_argument("duplicate parameter id '" + id + "'");
  auto [it, inserted] = params_.emplace(id, Parameter{id, Tensor::full(shape, fill, dtype), 0, false});
  return it->second;
}

Parameter& ParameterRegistry::at(const std::string& id) {
  auto it = params_.find(id);
  if (it == params_.end()) throw std::out_of_range("unknown parameter id '" + id + "'");
  return it->second;
}

const Parameter& ParameterRegistry::at(const std::string& id) const {
  auto it = params_.find(id);
  if (it == params_.end()) throw std::out_of_range("unknown parameter id '" + id + "'");
  return it->second;
}

std::int64_t ParameterRegistry::trainable_elements() const {
  std::int64_t total = 0;
  for (const auto& [id, p] : params_)
    if (p.trainable) total += p.tensor.numel();
  return total;
}

std::int64_t ParameterRegistry::trainable_elements(const std::string& prefix) const {
  std::int64_t total = 0;
  for (auto it = params_.lower_bound(prefix);
       it != params_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it)
    if (it->second.trainable) total += it->second.tensor.numel();
  return total;
}

void ParameterRegistry::zero_grad() {
  for (auto& [id, p] : params_) p.tensor.clear_grad();
}

double ParameterRegistry::grad_norm() const {
  double sq = 0;
  for (const auto& [id, p] : params_) {
    if (!p.tensor.has_grad()) continue;
    const Storage& g = *p.tensor.impl()->grad;
    visit_dtype(g.dtype(), [&](auto zero) {
      using T = decltype(zero);
      for (T v : g.as<T>()) sq += static_cast<double>(v) * static_cast<double>(v);
    });
  }
  return std::sqrt(sq);
}

}  // namespace shufflenas
