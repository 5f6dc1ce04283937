// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shufflenas/tensor.hpp"

// Differentiable operations. Every function records onto the active tape
// when one of its inputs requires a gradient; otherwise it is a plain
// forward computation. Activations use batch x channels x height x width.
namespace shufflenas::ops {

enum class ElementwiseKind { add, mul, relu, tanh, sigmoid, scale, exp };

/// Generic dispatcher; `b` is required for add/mul and ignored otherwise,
/// `factor` is used by scale.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b = nullptr,
                   double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);

/// Sum of a non-empty list of equally shaped tensors.
Tensor add_n(std::span<const Tensor> terms);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x n] + row[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Columns [start, start + count) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count);
/// Row `index` of a 2-D tensor as a 1 x n tensor.
Tensor select_row(const Tensor& a, std::int64_t index);
/// Row-wise log-softmax of a 2-D tensor.
Tensor log_softmax(const Tensor& logits);
/// Scalar element at flat index.
Tensor pick(const Tensor& a, std::int64_t flat_index);

/// Mean negative log-likelihood of integer labels under row-wise softmax.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Image operations (NCHW).

/// Same-padded convolution without bias; weights are out x in x kh x kw.
Tensor conv2d(const Tensor& x, const Tensor& weights, int stride);
/// Same-padded depthwise convolution; weights are C x 1 x kh x kw.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weights, int stride);

enum class PoolKind { max, min, avg };
/// k x k window, same padding. Max pads with -inf, min with +inf, average
/// counts only in-bounds elements.
Tensor pool2d(const Tensor& x, PoolKind kind, int kernel, int stride);

struct BatchNormBuffers {
  Tensor running_mean;
  Tensor running_var;
};
Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  BatchNormBuffers& buffers, bool training, double momentum,
                  double epsilon);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, std::int64_t start, std::int64_t count);
Tensor channel_shuffle(const Tensor& x, std::int64_t groups);
/// y[n, c, i, j] = x[n, c, i + 1, j + 1], zero outside the input.
Tensor shift_one_pixel(const Tensor& x);
/// N x C x H x W -> N x C.
Tensor global_avg_pool(const Tensor& x);
/// Multiplies every element of sample n by factors[n] (factors are constants).
Tensor scale_per_sample(const Tensor& x, std::span<const double> factors);

/// Channel permutation applied by channel_shuffle: output channel i takes
/// input channel permutation[i].
std::vector<std::int64_t> shuffle_permutation(std::int64_t channels,
                                              std::int64_t groups);

/// Output extent under same padding.
inline std::int64_t same_out(std::int64_t extent, int stride) {
  return (extent + stride - 1) / stride;
}

}  // namespace shufflenas::ops
