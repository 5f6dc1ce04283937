// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shufflenas/cost.hpp"
#include "shufflenas/tape.hpp"

namespace shufflenas::ops {

using detail::grad_of;
using detail::should_record;

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  if (a.dtype() != b.dtype())
    throw std::invalid_argument(std::string(op) + ": dtype mismatch " + to_string(a.dtype()) +
                                " vs " + to_string(b.dtype()));
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(a.shape()));
}

// Unary map with derivative expressed through input x and output y.
template <class Forward, class Derivative>
Tensor unary(const char* name, const Tensor& a, Forward fwd, Derivative deriv) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  });
  cost::elementwise(a.numel(), a.numel());
  if (should_record({&a})) {
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    active_tape()->record(name, {ai}, oi, [ai, oi, deriv] {
      if (!ai->requires_grad) return;
      visit_dtype(ai->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto x = ai->value.as<T>();
        auto y = oi->value.as<T>();
        auto gy = oi->grad->as<T>();
        auto gx = grad_of(*ai).as<T>();
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * deriv(x[i], y[i]);
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + y[i];
  });
  cost::elementwise(2 * a.numel(), a.numel());
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("add", {ai, bi}, oi, [ai, bi, oi] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        for (auto* in : {ai.get(), bi.get()}) {
          if (!in->requires_grad) continue;
          auto gi = grad_of(*in).template as<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      });
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i];
  });
  cost::elementwise(2 * a.numel(), a.numel());
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("mul", {ai, bi}, oi, [ai, bi, oi] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        auto x = ai->value.as<T>();
        auto y = bi->value.as<T>();
        if (ai->requires_grad) {
          auto gx = grad_of(*ai).as<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
        }
        if (bi->requires_grad) {
          auto gy = grad_of(*bi).as<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * x[i];
        }
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](auto x) { return static_cast<decltype(x)>(x * factor); },
      [factor](auto x, auto) { return static_cast<decltype(x)>(factor); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](auto x) { return x > 0 ? x : decltype(x)(0); },
      [](auto x, auto) { return x > 0 ? decltype(x)(1) : decltype(x)(0); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](auto x) { return std::tanh(x); },
      [](auto, auto y) { return decltype(y)(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](auto x) { return decltype(x)(1) / (decltype(x)(1) + std::exp(-x)); },
      [](auto, auto y) { return y * (decltype(y)(1) - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](auto x) { return std::exp(x); }, [](auto, auto y) { return y; });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b, double factor) {
  auto need_b = [&]() -> const Tensor& {
    if (!b) throw std::invalid_argument("elementwise: binary kind requires a second operand");
    return *b;
  };
  switch (kind) {
    case ElementwiseKind::add: return add(a, need_b());
    case ElementwiseKind::mul: return mul(a, need_b());
    case ElementwiseKind::relu: return relu(a);
    case ElementwiseKind::tanh: return tanh(a);
    case ElementwiseKind::sigmoid: return sigmoid(a);
    case ElementwiseKind::scale: return scale(a, factor);
    case ElementwiseKind::exp: return exp(a);
  }
  throw std::invalid_argument("elementwise: unknown kind");
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: empty term list");
  for (const auto& t : terms) require_same(terms[0], t, "add_n");
  if (terms.size() == 1) return terms[0];
  Tensor out = Tensor::zeros(terms[0].shape(), terms[0].dtype());
  visit_dtype(out.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto z = out.data<T>();
    for (const auto& t : terms) {
      auto x = t.data<T>();
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += x[i];
    }
  });
  const auto n = terms[0].numel();
  for (std::size_t k = 1; k < terms.size(); ++k) cost::elementwise(2 * n, n);
  std::vector<Tensor> inputs(terms.begin(), terms.end());
  if (should_record(inputs)) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& t : inputs) impls.push_back(t.impl_ptr());
    auto oi = out.impl_ptr();
    active_tape()->record("add_n", impls, oi, [impls, oi] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        for (const auto& in : impls) {
          if (!in->requires_grad) continue;
          auto gi = grad_of(*in).template as<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      });
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1}, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    T acc = 0;
    for (T v : a.data<T>()) acc += v;
    out.data<T>()[0] = acc;
  });
  if (should_record({&a})) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("sum", {ai}, oi, [ai, oi] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        T g = oi->grad->as<T>()[0];
        for (auto& gi : grad_of(*ai).as<T>()) gi += g;
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  if (a.dtype() != b.dtype()) throw std::invalid_argument("matmul: dtype mismatch");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n}, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto A = a.data<T>();
    auto B = b.data<T>();
    auto C = out.data<T>();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = A[i * k + p];
        const T* brow = &B[p * n];
        T* crow = &C[i * n];
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  });
  cost::kernel(m * k * n, m * k, k * n, m * n);
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("matmul", {ai, bi}, oi, [ai, bi, oi, m, k, n] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto A = ai->value.as<T>();
        auto B = bi->value.as<T>();
        if (ai->requires_grad) {
          auto GA = grad_of(*ai).as<T>();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t p = 0; p < k; ++p) {
              T acc = 0;
              for (std::int64_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
              GA[i * k + p] += acc;
            }
        }
        if (bi->requires_grad) {
          auto GB = grad_of(*bi).as<T>();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t p = 0; p < k; ++p) {
              const T av = A[i * k + p];
              for (std::int64_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
            }
        }
      });
    });
  }
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row");
  if (row.numel() != a.dim(1) || row.dtype() != a.dtype())
    throw std::invalid_argument("add_row: row " + shape_str(row.shape()) +
                                " does not match " + shape_str(a.shape()));
  const auto m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto r = row.data<T>();
    auto z = out.data<T>();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) z[i * n + j] = x[i * n + j] + r[j];
  });
  cost::elementwise(a.numel() + n, a.numel());
  if (should_record({&a, &row})) {
    auto ai = a.impl_ptr(), ri = row.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("add_row", {ai, ri}, oi, [ai, ri, oi, m, n] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        if (ai->requires_grad) {
          auto gx = grad_of(*ai).as<T>();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (ri->requires_grad) {
          auto gr = grad_of(*ri).as<T>();
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
        }
      });
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count) {
  require_rank(a, 2, "slice_cols");
  const auto m = a.dim(0), n = a.dim(1);
  if (start < 0 || count <= 0 || start + count > n)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") outside " +
                                shape_str(a.shape()));
  Tensor out = Tensor::zeros({m, count}, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto z = out.data<T>();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < count; ++j) z[i * count + j] = x[i * n + start + j];
  });
  if (should_record({&a})) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("slice_cols", {ai}, oi, [ai, oi, m, n, start, count] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        auto gx = grad_of(*ai).as<T>();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < count; ++j) gx[i * n + start + j] += g[i * count + j];
      });
    });
  }
  return out;
}

Tensor select_row(const Tensor& a, std::int64_t index) {
  require_rank(a, 2, "select_row");
  const auto m = a.dim(0), n = a.dim(1);
  if (index < 0 || index >= m)
    throw std::invalid_argument("select_row: index " + std::to_string(index) + " outside " +
                                shape_str(a.shape()));
  Tensor out = Tensor::zeros({1, n}, a.dtype());
  visit_dtype(a.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = a.data<T>();
    auto z = out.data<T>();
    for (std::int64_t j = 0; j < n; ++j) z[j] = x[index * n + j];
  });
  if (should_record({&a})) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("select_row", {ai}, oi, [ai, oi, n, index] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        auto gx = grad_of(*ai).as<T>();
        for (std::int64_t j = 0; j < n; ++j) gx[index * n + j] += g[j];
      });
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& logits) {
  require_rank(logits, 2, "log_softmax");
  const auto m = logits.dim(0), n = logits.dim(1);
  Tensor out = Tensor::zeros(logits.shape(), logits.dtype());
  visit_dtype(logits.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = logits.data<T>();
    auto z = out.data<T>();
    for (std::int64_t i = 0; i < m; ++i) {
      const T* row = &x[i * n];
      T mx = *std::max_element(row, row + n);
      T acc = 0;
      for (std::int64_t j = 0; j < n; ++j) acc += std::exp(row[j] - mx);
      const T lse = mx + std::log(acc);
      for (std::int64_t j = 0; j < n; ++j) z[i * n + j] = row[j] - lse;
    }
  });
  if (should_record({&logits})) {
    auto ai = logits.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("log_softmax", {ai}, oi, [ai, oi, m, n] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto g = oi->grad->as<T>();
        auto y = oi->value.as<T>();
        auto gx = grad_of(*ai).as<T>();
        for (std::int64_t i = 0; i < m; ++i) {
          T gsum = 0;
          for (std::int64_t j = 0; j < n; ++j) gsum += g[i * n + j];
          for (std::int64_t j = 0; j < n; ++j)
            gx[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * gsum;
        }
      });
    });
  }
  return out;
}

Tensor pick(const Tensor& a, std::int64_t flat_index) {
  if (flat_index < 0 || flat_index >= a.numel())
    throw std::invalid_argument("pick: index " + std::to_string(flat_index) + " outside " +
                                shape_str(a.shape()));
  Tensor out = Tensor::zeros({1}, a.dtype());
  out.set(0, a.at(flat_index));
  if (should_record({&a})) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("pick", {ai}, oi, [ai, oi, flat_index] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        grad_of(*ai).as<T>()[static_cast<std::size_t>(flat_index)] += oi->grad->as<T>()[0];
      });
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const auto batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(batch));
  for (int label : labels)
    if (label < 0 || label >= classes)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(classes) + ")");
  Tensor out = Tensor::zeros({1}, logits.dtype());
  // Softmax probabilities kept for the backward pass.
  auto probs = std::make_shared<Storage>(logits.dtype(), static_cast<std::size_t>(logits.numel()));
  visit_dtype(logits.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto x = logits.data<T>();
    auto p = probs->as<T>();
    double loss = 0;
    for (std::int64_t i = 0; i < batch; ++i) {
      const T* row = &x[i * classes];
      T mx = *std::max_element(row, row + classes);
      T acc = 0;
      for (std::int64_t j = 0; j < classes; ++j) {
        p[i * classes + j] = std::exp(row[j] - mx);
        acc += p[i * classes + j];
      }
      for (std::int64_t j = 0; j < classes; ++j) p[i * classes + j] /= acc;
      loss += static_cast<double>(mx + std::log(acc) - row[labels[i]]);
    }
    out.data<T>()[0] = static_cast<T>(loss / static_cast<double>(batch));
  });
  if (should_record({&logits})) {
    auto ai = logits.impl_ptr(), oi = out.impl_ptr();
    std::vector<int> lab(labels.begin(), labels.end());
    active_tape()->record("softmax_cross_entropy", {ai}, oi,
                          [ai, oi, probs, lab = std::move(lab), batch, classes] {
      if (!ai->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        const T g = oi->grad->as<T>()[0] / static_cast<T>(batch);
        auto p = probs->as<T>();
        auto gx = grad_of(*ai).as<T>();
        for (std::int64_t i = 0; i < batch; ++i)
          for (std::int64_t j = 0; j < classes; ++j) {
            const T onehot = (j == lab[static_cast<std::size_t>(i)]) ? T(1) : T(0);
            gx[i * classes + j] += g * (p[i * classes + j] - onehot);
          }
      });
    });
  }
  return out;
}

}  // namespace shufflenas::ops
