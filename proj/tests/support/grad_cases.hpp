// SPDX-License-Identifier: Apache-2.0
// Catalogue of differentiable operations for finite-difference checks.
#pragma once

#include <string>
#include <vector>

#include "shufflenas/nn_ops.hpp"
#include "shufflenas/ops.hpp"
#include "shufflenas/parameters.hpp"
#include "test_util.hpp"

namespace shufflenas::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(Rng&)> run;
};

inline std::vector<GradCase> gradient_cases() {
  using T = std::vector<Tensor>;
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<GradCheckResult(Rng&)> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };

  add("add", [](Rng& r) {
    return grad_check([](const T& in) { return ops::add(in[0], in[1]); },
                      {random_tensor({3, 4}, r, DType::f64, true), random_tensor({3, 4}, r, DType::f64, true)}, r);
  });
  add("sub", [](Rng& r) {
    return grad_check([](const T& in) { return ops::sub(in[0], in[1]); },
                      {random_tensor({2, 5}, r, DType::f64, true), random_tensor({2, 5}, r, DType::f64, true)}, r);
  });
  add("mul", [](Rng& r) {
    return grad_check([](const T& in) { return ops::mul(in[0], in[1]); },
                      {random_tensor({4, 3}, r, DType::f64, true), random_tensor({4, 3}, r, DType::f64, true)}, r);
  });
  add("scale", [](Rng& r) {
    const double f = r.uniform(-2, 2);
    return grad_check([f](const T& in) { return ops::scale(in[0], f); },
                      {random_tensor({6}, r, DType::f64, true)}, r);
  });
  add("relu", [](Rng& r) {
    return grad_check([](const T& in) { return ops::relu(in[0]); }, {away_from_zero({2, 3, 4, 4}, r)}, r);
  });
  add("tanh", [](Rng& r) {
    return grad_check([](const T& in) { return ops::tanh(in[0]); },
                      {random_tensor({3, 7}, r, DType::f64, true)}, r);
  });
  add("sigmoid", [](Rng& r) {
    return grad_check([](const T& in) { return ops::sigmoid(in[0]); },
                      {random_tensor({3, 7}, r, DType::f64, true)}, r);
  });
  add("exp", [](Rng& r) {
    return grad_check([](const T& in) { return ops::exp(in[0]); },
                      {random_tensor({5}, r, DType::f64, true, 0.5)}, r);
  });
  add("add_n", [](Rng& r) {
    return grad_check([](const T& in) { return ops::add_n(in); },
                      {random_tensor({2, 2, 3, 3}, r, DType::f64, true), random_tensor({2, 2, 3, 3}, r, DType::f64, true),
                       random_tensor({2, 2, 3, 3}, r, DType::f64, true)}, r);
  });
  add("sum", [](Rng& r) {
    return grad_check([](const T& in) { return ops::sum(in[0]); },
                      {random_tensor({4, 5}, r, DType::f64, true)}, r);
  });
  add("mean", [](Rng& r) {
    return grad_check([](const T& in) { return ops::mean(in[0]); },
                      {random_tensor({4, 5}, r, DType::f64, true)}, r);
  });
  add("matmul", [](Rng& r) {
    return grad_check([](const T& in) { return ops::matmul(in[0], in[1]); },
                      {random_tensor({3, 5}, r, DType::f64, true), random_tensor({5, 4}, r, DType::f64, true)}, r);
  });
  add("add_row", [](Rng& r) {
    return grad_check([](const T& in) { return ops::add_row(in[0], in[1]); },
                      {random_tensor({3, 4}, r, DType::f64, true), random_tensor({4}, r, DType::f64, true)}, r);
  });
  add("slice_cols", [](Rng& r) {
    return grad_check([](const T& in) { return ops::slice_cols(in[0], 2, 3); },
                      {random_tensor({2, 7}, r, DType::f64, true)}, r);
  });
  add("select_row", [](Rng& r) {
    const auto row = r.uniform_int(4);
    return grad_check([row](const T& in) { return ops::select_row(in[0], row); },
                      {random_tensor({4, 6}, r, DType::f64, true)}, r);
  });
  add("log_softmax", [](Rng& r) {
    return grad_check([](const T& in) { return ops::log_softmax(in[0]); },
                      {random_tensor({1, 6}, r, DType::f64, true)}, r);
  });
  add("pick", [](Rng& r) {
    const auto i = r.uniform_int(8);
    return grad_check([i](const T& in) { return ops::pick(in[0], i); },
                      {random_tensor({1, 8}, r, DType::f64, true)}, r);
  });
  add("softmax_cross_entropy", [](Rng& r) {
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(r.uniform_int(4)));
    return grad_check([labels](const T& in) { return ops::softmax_cross_entropy(in[0], labels); },
                      {random_tensor({5, 4}, r, DType::f64, true)}, r);
  });
  for (int stride : {1, 2}) {
    for (int k : {1, 3}) {
      add("conv2d k" + std::to_string(k) + " s" + std::to_string(stride), [stride, k](Rng& r) {
        return grad_check([stride](const T& in) { return ops::conv2d(in[0], in[1], stride); },
                          {random_tensor({2, 3, 5, 5}, r, DType::f64, true),
                           random_tensor({4, 3, k, k}, r, DType::f64, true)}, r);
      });
    }
    for (int k : {3, 5}) {
      add("depthwise k" + std::to_string(k) + " s" + std::to_string(stride), [stride, k](Rng& r) {
        return grad_check([stride](const T& in) { return ops::depthwise_conv2d(in[0], in[1], stride); },
                          {random_tensor({2, 3, 6, 6}, r, DType::f64, true),
                           random_tensor({3, 1, k, k}, r, DType::f64, true)}, r);
      });
    }
    for (auto kind : {ops::PoolKind::max, ops::PoolKind::min, ops::PoolKind::avg}) {
      const char* name = kind == ops::PoolKind::max ? "max" : kind == ops::PoolKind::min ? "min" : "avg";
      add(std::string("pool ") + name + " s" + std::to_string(stride), [stride, kind](Rng& r) {
        return grad_check([stride, kind](const T& in) { return ops::pool2d(in[0], kind, 3, stride); },
                          {distinct_values({2, 2, 5, 5}, r)}, r);
      });
    }
  }
  for (bool training : {true, false}) {
    add(std::string("batch_norm ") + (training ? "train" : "eval"), [training](Rng& r) {
      Tensor mean = random_tensor({3}, r, DType::f64, false, 0.1);
      Tensor var = Tensor::full({3}, 1.5, DType::f64);
      return grad_check(
          [training, mean, var](const T& in) {
            ops::BatchNormBuffers buffers{mean.clone(), var.clone()};
            return ops::batch_norm(in[0], in[1], in[2], buffers, training, 0.9, 1e-5);
          },
          {random_tensor({4, 3, 3, 3}, r, DType::f64, true), random_tensor({3}, r, DType::f64, true),
           random_tensor({3}, r, DType::f64, true)},
          r);
    });
  }
  add("concat_channels", [](Rng& r) {
    return grad_check([](const T& in) { return ops::concat_channels(in); },
                      {random_tensor({2, 2, 3, 3}, r, DType::f64, true), random_tensor({2, 3, 3, 3}, r, DType::f64, true)}, r);
  });
  add("slice_channels", [](Rng& r) {
    return grad_check([](const T& in) { return ops::slice_channels(in[0], 1, 2); },
                      {random_tensor({2, 4, 3, 3}, r, DType::f64, true)}, r);
  });
  add("channel_split", [](Rng& r) {
    return grad_check(
        [](const T& in) {
          auto [a, b] = channel_split(in[0]);
          return ops::add(ops::scale(a, 2.0), ops::scale(b, -3.0));
        },
        {random_tensor({2, 4, 3, 3}, r, DType::f64, true)}, r);
  });
  add("channel_shuffle", [](Rng& r) {
    return grad_check([](const T& in) { return ops::channel_shuffle(in[0], 2); },
                      {random_tensor({2, 6, 2, 2}, r, DType::f64, true)}, r);
  });
  add("shift_one_pixel", [](Rng& r) {
    return grad_check([](const T& in) { return ops::shift_one_pixel(in[0]); },
                      {random_tensor({2, 2, 4, 4}, r, DType::f64, true)}, r);
  });
  add("global_avg_pool", [](Rng& r) {
    return grad_check([](const T& in) { return ops::global_avg_pool(in[0]); },
                      {random_tensor({3, 4, 3, 3}, r, DType::f64, true)}, r);
  });
  add("scale_per_sample", [](Rng& r) {
    std::vector<double> f{r.uniform(0, 2), 0.0, r.uniform(0, 2)};
    return grad_check([f](const T& in) { return ops::scale_per_sample(in[0], f); },
                      {random_tensor({3, 2, 2, 2}, r, DType::f64, true)}, r);
  });
  add("factorized_reduction", [](Rng& r) {
    auto reg = std::make_shared<ParameterRegistry>();
    ParamAllocator alloc(*reg, DType::f64, r.next_u64());
    allocate_factorized_reduction(alloc, "fr", 4, 6);
    OpRuntime rt;
    rt.training = true;
    return grad_check(
        [reg, rt](const T& in) { return factorized_reduction(*reg, "fr", in[0], rt); },
        {random_tensor({3, 4, 5, 5}, r, DType::f64, true)}, r);
  });
  for (OperationId op : {OperationId::SEP3, OperationId::SEP5, OperationId::CONV1}) {
    for (int stride : {1, 2}) {
      add(std::string("candidate ") + std::string(operation_name(op)) + " s" + std::to_string(stride),
          [op, stride](Rng& r) {
            auto reg = std::make_shared<ParameterRegistry>();
            ParamAllocator alloc(*reg, DType::f64, r.next_u64());
            allocate_candidate_op(alloc, "op", op, 3, true);
            OpRuntime rt;
            rt.training = true;
            // The ReLU kink is avoided by keeping inputs away from zero;
            // interior activations are checked with a smaller step.
            return grad_check([reg, op, stride, rt](const T& in) {
              return apply_candidate_op(*reg, "op", op, in[0], stride, rt);
            }, {away_from_zero({3, 3, 5, 5}, r)}, r, 1e-5);
          });
    }
  }
  return cases;
}

}  // namespace shufflenas::testing
