// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "shufflenas/tensor.hpp"

namespace shufflenas {

/// Ordered record of differentiable operations executed while the tape is
/// active. Entries are appended in execution order, which is a topological
/// order of the computation.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    const char* name;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  void record(const char* name, std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output, BackwardFn backward);

  /// Reverse-mode sweep from a scalar loss. Leaf tensors that require
  /// gradients accumulate into their grad buffers; leaves the loss does not
  /// reach keep whatever gradient they had (none, after a zero_grad).
  /// Intermediate gradients are released afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// The tape that operations record onto in this thread, or nullptr when
/// running without gradient tracking.
Tape* active_tape();

/// Installs a tape as the active one for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

/// True when any input requires a gradient and a tape is recording.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(const std::vector<Tensor>& inputs);

/// Gradient buffer of an impl, allocated as zeros on first use.
Storage& grad_of(TensorImpl& impl);

}  // namespace detail

}  // namespace shufflenas
