// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace shufflenas {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string to_string(DType dtype);

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Flat element storage, either 32- or 64-bit.
class Storage {
 public:
  Storage() = default;
  Storage(DType dtype, std::size_t n);

  DType dtype() const { return data_.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t size() const;

  template <class T>
  std::span<T> as() {
    return std::span<T>(std::get<std::vector<T>>(data_));
  }
  template <class T>
  std::span<const T> as() const {
    return std::span<const T>(std::get<std::vector<T>>(data_));
  }

  void fill_zero();

 private:
  std::variant<std::vector<float>, std::vector<double>> data_;
};

struct TensorImpl {
  Shape shape;
  Storage value;
  std::optional<Storage> grad;
  bool requires_grad = false;
  // Produced by a recorded operation (as opposed to a leaf).
  bool is_intermediate = false;
};

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::f32,
                      bool requires_grad = false);
  static Tensor full(const Shape& shape, double value,
                     DType dtype = DType::f32);
  static Tensor from_values(const Shape& shape, const std::vector<double>& values,
                            DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return numel_of(impl_->shape); }
  DType dtype() const { return impl_->value.dtype(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  template <class T>
  std::span<T> data() {
    return impl_->value.as<T>();
  }
  template <class T>
  std::span<const T> data() const {
    return std::as_const(impl_->value).as<T>();
  }

  double item() const;
  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  std::vector<double> to_vector() const;

  bool has_grad() const { return impl_->grad.has_value(); }
  /// Copy of the accumulated gradient (zeros if none has been accumulated).
  Tensor grad() const;
  std::vector<double> grad_vector() const;
  void clear_grad() { impl_->grad.reset(); }
  Storage& grad_storage();

  Tensor clone() const;
  Tensor to(DType dtype) const;
  /// Overwrites the values in place, keeping identity (used by optimizers
  /// and checkpoint restore).
  void assign(const Tensor& other);

  bool bit_equal(const Tensor& other) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(std::shared_ptr<TensorImpl>);

  std::shared_ptr<TensorImpl> impl_;
};

Tensor make_tensor(std::shared_ptr<TensorImpl> impl);

/// Calls fn(T{}) with T = float or double matching dtype.
template <class F>
decltype(auto) visit_dtype(DType dtype, F&& fn) {
  if (dtype == DType::f32) return fn(float{});
  return fn(double{});
}

}  // namespace shufflenas
