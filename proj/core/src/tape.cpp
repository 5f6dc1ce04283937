// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/tape.hpp"

#include <stdexcept>

namespace shufflenas {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(const char* name, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
  output->requires_grad = true;
  output->is_intermediate = true;
  entries_.push_back({name, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " +
                                (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  std::size_t producer = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.get() == loss.impl()) {
      producer = i;
      break;
    }
  }
  if (producer == entries_.size())
    throw std::invalid_argument("backward: loss was not produced on this tape");

  auto& seed = detail::grad_of(*loss.impl());
  visit_dtype(seed.dtype(), [&](auto zero) {
    using T = decltype(zero);
    seed.as<T>()[0] += T(1);
  });

  for (std::size_t i = producer + 1; i-- > 0;) {
    auto& entry = entries_[i];
    if (!entry.output->grad) continue;
    entry.backward();
  }
  for (auto& entry : entries_) entry.output->grad.reset();
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (!g_active_tape) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

Storage& grad_of(TensorImpl& impl) {
  if (!impl.grad) impl.grad = Storage(impl.value.dtype(), impl.value.size());
  return *impl.grad;
}

}  // namespace detail

}  // namespace shufflenas
