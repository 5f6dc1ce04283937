// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shufflenas {

namespace {

void save_state(Checkpoint& checkpoint, const std::string& prefix,
                const std::map<std::string, Tensor>& state) {
  for (const auto& [id, t] : state) checkpoint.tensors[prefix + id] = t.clone();
}

std::map<std::string, Tensor> load_state(const Checkpoint& checkpoint, const std::string& prefix) {
  std::map<std::string, Tensor> state;
  for (auto it = checkpoint.tensors.lower_bound(prefix);
       it != checkpoint.tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it)
    state[it->first.substr(prefix.size())] = it->second.clone();
  return state;
}

Tensor& state_for(std::map<std::string, Tensor>& state, const Parameter& p) {
  auto it = state.find(p.id);
  if (it == state.end())
    it = state.emplace(p.id, Tensor::zeros(p.tensor.shape(), p.tensor.dtype())).first;
  if (it->second.shape() != p.tensor.shape() || it->second.dtype() != p.tensor.dtype())
    throw std::invalid_argument("optimizer state for '" + p.id + "' has shape " +
                                shape_str(it->second.shape()) + ", parameter has " +
                                shape_str(p.tensor.shape()));
  return it->second;
}

}  // namespace

double Sgd::step(ParameterRegistry& registry, double lr) {
  const double norm = registry.grad_norm();
  const double clip =
      config_.clip_norm > 0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  for (auto& [id, p] : registry) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    Tensor& velocity = state_for(velocity_, p);
    visit_dtype(p.tensor.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto w = p.tensor.data<T>();
      auto g = std::as_const(p.tensor.grad_storage()).template as<T>();
      auto v = velocity.data<T>();
      const double mu = config_.momentum;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double grad = clip * g[i] + config_.weight_decay * w[i];
        const double vel = mu * v[i] + grad;
        v[i] = static_cast<T>(vel);
        const double update = config_.nesterov ? grad + mu * vel : vel;
        w[i] = static_cast<T>(w[i] - lr * update);
      }
    });
    ++p.update_count;
  }
  return norm;
}

void Sgd::save(Checkpoint& checkpoint, const std::string& prefix) const {
  save_state(checkpoint, prefix + "velocity/", velocity_);
}

void Sgd::load(const Checkpoint& checkpoint, const std::string& prefix) {
  velocity_ = load_state(checkpoint, prefix + "velocity/");
}

void Adam::step(ParameterRegistry& registry, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (auto& [id, p] : registry) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    Tensor& m = state_for(m_, p);
    Tensor& v = state_for(v_, p);
    visit_dtype(p.tensor.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto w = p.tensor.data<T>();
      auto g = std::as_const(p.tensor.grad_storage()).template as<T>();
      auto mm = m.data<T>();
      auto vv = v.data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double grad = g[i];
        const double m1 = config_.beta1 * mm[i] + (1 - config_.beta1) * grad;
        const double v1 = config_.beta2 * vv[i] + (1 - config_.beta2) * grad * grad;
        mm[i] = static_cast<T>(m1);
        vv[i] = static_cast<T>(v1);
        w[i] = static_cast<T>(w[i] - lr * (m1 / c1) / (std::sqrt(v1 / c2) + config_.epsilon));
      }
    });
    ++p.update_count;
  }
}

void Adam::save(Checkpoint& checkpoint, const std::string& prefix) const {
  save_state(checkpoint, prefix + "m/", m_);
  save_state(checkpoint, prefix + "v/", v_);
  checkpoint.meta[prefix + "steps"] = std::to_string(steps_);
}

void Adam::load(const Checkpoint& checkpoint, const std::string& prefix) {
  m_ = load_state(checkpoint, prefix + "m/");
  v_ = load_state(checkpoint, prefix + "v/");
  steps_ = std::stoll(checkpoint.meta_at(prefix + "steps"));
}

}  // namespace shufflenas
