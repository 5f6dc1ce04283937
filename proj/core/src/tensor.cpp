// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace shufflenas {

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Storage::Storage(DType dtype, std::size_t n) {
  if (dtype == DType::f32)
    data_ = std::vector<float>(n, 0.0f);
  else
    data_ = std::vector<double>(n, 0.0);
}

std::size_t Storage::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

void Storage::fill_zero() {
  std::visit([](auto& v) { std::fill(v.begin(), v.end(), 0); }, data_);
}

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(const Shape& shape, DType dtype, bool requires_grad) {
  for (auto extent : shape)
    if (extent <= 0)
      throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->value = Storage(dtype, static_cast<std::size_t>(numel_of(shape)));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  Tensor t = zeros(shape, dtype);
  visit_dtype(dtype, [&](auto zero) {
    using T = decltype(zero);
    auto d = t.data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, const std::vector<double>& values,
                           DType dtype) {
  Tensor t = zeros(shape, dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel())
    throw std::invalid_argument("from_values: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  visit_dtype(dtype, [&](auto zero) {
    using T = decltype(zero);
    auto d = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a single-element tensor, got " +
                                shape_str(shape()));
  return at(0);
}

double Tensor::at(std::int64_t i) const {
  return visit_dtype(dtype(), [&](auto zero) -> double {
    using T = decltype(zero);
    return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set(std::int64_t i, double value) {
  visit_dtype(dtype(), [&](auto zero) {
    using T = decltype(zero);
    data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(value);
  });
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  visit_dtype(dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto d = data<T>();
    std::copy(d.begin(), d.end(), out.begin());
  });
  return out;
}

Tensor Tensor::grad() const {
  Tensor g = zeros(shape(), dtype());
  if (impl_->grad) g.impl_->value = *impl_->grad;
  return g;
}

std::vector<double> Tensor::grad_vector() const { return grad().to_vector(); }

Storage& Tensor::grad_storage() {
  if (!impl_->grad) impl_->grad = Storage(dtype(), static_cast<std::size_t>(numel()));
  return *impl_->grad;
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->value = impl_->value;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor out = zeros(shape(), target);
  visit_dtype(dtype(), [&](auto from_zero) {
    using From = decltype(from_zero);
    visit_dtype(target, [&](auto to_zero) {
      using To = decltype(to_zero);
      auto src = data<From>();
      auto dst = out.data<To>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
    });
  });
  return out;
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape() || other.dtype() != dtype())
    throw std::invalid_argument("assign: expected " + shape_str(shape()) + " " +
                                to_string(dtype()) + ", got " + shape_str(other.shape()) +
                                " " + to_string(other.dtype()));
  impl_->value = other.impl_->value;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape() != other.shape() || dtype() != other.dtype()) return false;
  return visit_dtype(dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto a = data<T>();
    auto b = other.data<T>();
    return std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
  });
}

}  // namespace shufflenas
