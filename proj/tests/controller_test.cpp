// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "bandit.hpp"
#include "shufflenas/checkpoint.hpp"
#include "shufflenas/controller.hpp"
#include "shufflenas/supernet.hpp"
#include "shufflenas/trainer.hpp"

using namespace shufflenas;
using namespace shufflenas::testing;

namespace {

std::map<std::string, Tensor> snapshot(Controller& c) {
  std::map<std::string, Tensor> out;
  for (const auto& [id, p] : c.parameters()) out[id] = p.tensor.clone();
  return out;
}

bool unchanged(Controller& c, const std::map<std::string, Tensor>& snap) {
  for (const auto& [id, p] : c.parameters())
    if (!p.tensor.bit_equal(snap.at(id))) return false;
  return true;
}

}  // namespace

TEST(Controller, ShapeOfState) {
  Controller c;
  EXPECT_EQ(c.parameters().tensor("ctrl/lstm/wh").shape(), (Shape{100, 400}));
  EXPECT_EQ(c.parameters().tensor("ctrl/head/op/w").shape(), (Shape{100, 6}));
  EXPECT_THROW(Controller(ControllerConfig{.hidden = 0}), std::invalid_argument);
}

TEST(Controller, TraceLayoutAndForcedFirstIndex) {
  Controller c;
  Rng rng(1);
  for (int b = 1; b <= 8; ++b) {
    auto [g, trace] = c.sample(b, rng);
    ASSERT_EQ(trace.decisions.size(), static_cast<std::size_t>(4 * b));
    EXPECT_EQ(g.blocks(), b);
    EXPECT_EQ(trace.kinds[0], DecisionKind::input);
    EXPECT_EQ(trace.kinds[1], DecisionKind::op);
    // Block 1 of each cell has one legal input: log-probability exactly 0.
    EXPECT_EQ(trace.log_probs[0], 0.0);
    EXPECT_EQ(trace.log_probs[static_cast<std::size_t>(2 * b)], 0.0);
    for (double lp : trace.log_probs) EXPECT_LE(lp, 0.0);
    EXPECT_EQ(Controller::genotype_of(trace, b), g);
  }
  EXPECT_THROW(c.sample(0, rng), std::invalid_argument);
  EXPECT_THROW(c.sample(9, rng), std::invalid_argument);
}

TEST(Controller, MasksAndEntropyBounds) {
  Controller c;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    auto [g, trace] = c.sample(5, rng);
    for (std::size_t t = 0; t < trace.decisions.size(); ++t) {
      const auto& dist = trace.distributions[t];
      int valid = kNumOperations;
      if (trace.kinds[t] == DecisionKind::input) {
        valid = static_cast<int>((t % 10) / 2) + 1;
        ASSERT_EQ(dist.size(), static_cast<std::size_t>(ModelConfig::kMaxBlocks));
        for (std::size_t j = static_cast<std::size_t>(valid); j < dist.size(); ++j) EXPECT_EQ(dist[j], 0.0);
      }
      EXPECT_LE(trace.entropies[t], std::log(static_cast<double>(valid)) + 1e-12);
      EXPECT_GE(trace.entropies[t], -1e-12);
      EXPECT_LT(trace.decisions[t], valid);
    }
  }
}

TEST(Controller, SamplesAreAlwaysValid) {
  Controller c;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(validate(c.sample(1 + i % 8, rng).first).empty());
}

TEST(Controller, UntrainedOpFrequenciesAreUniform) {
  Controller c;
  Rng rng(4);
  std::vector<int> counts(kNumOperations, 0);
  const int draws = 6000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(operation_code(c.sample(1, rng).first.normal.blocks[0].op))];
  double chi2 = 0;
  for (int n : counts) chi2 += (n - 1000.0) * (n - 1000.0) / 1000.0;
  EXPECT_LT(chi2, 15.086);  // chi-square, 5 dof, p = 0.01
}

TEST(Controller, SeededSamplingIsDeterministic) {
  Controller a, b;
  Rng ra(5), rb(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.sample(4, ra).first, b.sample(4, rb).first);
}

TEST(Controller, ScoreReplaysTrace) {
  Controller c;
  Rng rng(6);
  auto [g, trace] = c.sample(4, rng);
  const auto [logp, entropy] = c.score(trace);
  EXPECT_DOUBLE_EQ(logp, trace.total_log_prob());
  EXPECT_DOUBLE_EQ(entropy, trace.mean_entropy());
}

TEST(Reinforce, RejectsMissingRewards) {
  Controller c;
  Rng rng(7);
  std::vector<SampleTrace> none;
  EXPECT_THROW(c.reinforce_update(none), std::invalid_argument);
  std::vector<SampleTrace> unrewarded{c.sample(2, rng).second};
  EXPECT_THROW(c.reinforce_update(unrewarded), std::invalid_argument);
}

TEST(Reinforce, ZeroAdvantageWithoutEntropyLeavesParametersBitIdentical) {
  ControllerConfig cfg;
  cfg.entropy_weight = 0;
  Controller c(cfg);
  Rng rng(8);
  std::vector<SampleTrace> traces;
  for (int i = 0; i < 10; ++i) {
    auto t = c.sample(3, rng).second;
    t.reward = 0.4;
    traces.push_back(t);
  }
  c.set_baseline(0.4);
  const auto before = snapshot(c);
  const auto stats = c.reinforce_update(traces);
  EXPECT_TRUE(unchanged(c, before));
  EXPECT_EQ(stats.baseline_after, 0.4);
}

TEST(Reinforce, ZeroAdvantageEntropyTermRaisesEntropy) {
  ControllerConfig cfg;
  cfg.lr = 1e-2;
  Controller skewed(cfg);
  Rng rng(9);
  // Skew the policy away from uniform, where the entropy gradient vanishes.
  auto skew = skewed.sample(3, rng).second;
  skew.reward = 1.0;
  skewed.set_baseline(0.0);
  for (int i = 0; i < 5; ++i) skewed.reinforce_update(std::span<const SampleTrace>(&skew, 1));
  Checkpoint state;
  skewed.save(state, "c/");

  // Two copies that differ only in the entropy weight; the optimizer state
  // (including momentum) is identical.
  auto after_update = [&](double entropy_weight) {
    ControllerConfig c2 = cfg;
    c2.entropy_weight = entropy_weight;
    Controller c(c2);
    c.load(state, "c/");
    Rng r(10);
    std::vector<SampleTrace> traces;
    for (int i = 0; i < 4; ++i) {
      auto t = c.sample(3, r).second;
      t.reward = 0.5;
      traces.push_back(t);
    }
    c.set_baseline(0.5);
    c.reinforce_update(traces);
    double entropy = 0;
    for (const auto& t : traces) entropy += c.score(t).second;
    return entropy;
  };
  EXPECT_GT(after_update(1.0), after_update(0.0));
}

TEST(Reinforce, PositiveAdvantageRaisesSampledProbability) {
  Controller c;
  Rng rng(10);
  auto t = c.sample(3, rng).second;
  t.reward = 1.0;
  c.set_baseline(0.2);
  const double before = c.score(t).first;
  c.reinforce_update(std::span<const SampleTrace>(&t, 1));
  EXPECT_GT(c.score(t).first, before);

  auto u = c.sample(3, rng).second;
  u.reward = 0.0;
  c.set_baseline(0.5);
  const double before_u = c.score(u).first;
  c.reinforce_update(std::span<const SampleTrace>(&u, 1));
  EXPECT_LT(c.score(u).first, before_u);
}

TEST(Reinforce, BaselineIsExponentialMovingAverage) {
  Controller c;
  Rng rng(11);
  auto make = [&](double r) {
    std::vector<SampleTrace> v;
    for (int i = 0; i < 2; ++i) {
      auto t = c.sample(2, rng).second;
      t.reward = r;
      v.push_back(t);
    }
    return v;
  };
  EXPECT_FALSE(c.baseline().has_value());
  auto s1 = c.reinforce_update(make(0.3));
  EXPECT_EQ(s1.baseline_before, 0.3);  // first update seeds the average
  auto s2 = c.reinforce_update(make(0.8));
  EXPECT_DOUBLE_EQ(s2.baseline_after, 0.99 * 0.3 + 0.01 * 0.8);
  EXPECT_DOUBLE_EQ(s2.mean_reward, 0.8);
}

TEST(Reinforce, BanditConvergesOnOneSeed) {
  const auto r = run_bandit({}, 1, 500);
  EXPECT_GT(r.updates_to_target, 0);
  EXPECT_LE(r.updates_to_target, 500);
}

TEST(Controller, CheckpointRestoresPolicyAndBaseline) {
  Controller a;
  Rng rng(12);
  for (int i = 0; i < 3; ++i) {
    auto t = a.sample(3, rng).second;
    t.reward = 0.1 * i;
    a.reinforce_update(std::span<const SampleTrace>(&t, 1));
  }
  Checkpoint ck;
  a.save(ck, "ctrl/");
  Controller b;
  b.load(deserialize_checkpoint(serialize_checkpoint(ck)), "ctrl/");
  EXPECT_EQ(b.baseline(), a.baseline());
  Rng ra(13), rb(13);
  for (int i = 0; i < 5; ++i) {
    auto ta = a.sample(3, ra).second;
    auto tb = b.sample(3, rb).second;
    EXPECT_EQ(ta.decisions, tb.decisions);
    EXPECT_EQ(ta.log_probs, tb.log_probs);
    ta.reward = tb.reward = 0.7;
    a.reinforce_update(std::span<const SampleTrace>(&ta, 1));
    b.reinforce_update(std::span<const SampleTrace>(&tb, 1));
  }
  for (const auto& [id, p] : a.parameters()) EXPECT_TRUE(p.tensor.bit_equal(b.parameters().tensor(id))) << id;
}

TEST(Reward, AccuracyDefinition) {
  Tensor logits = Tensor::from_values({4, 3}, {3, 0, 0, 0, 2, 1, 0, 0, 5, 1, 2, 0}, DType::f64);
  EXPECT_DOUBLE_EQ(accuracy(logits, std::vector<int>{0, 1, 2, 1}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(logits, std::vector<int>{0, 1, 2, 0}), 0.75);
  // Reordering the batch leaves the reward unchanged.
  Tensor swapped = Tensor::from_values({4, 3}, {1, 2, 0, 0, 0, 5, 0, 2, 1, 3, 0, 0}, DType::f64);
  EXPECT_DOUBLE_EQ(accuracy(swapped, std::vector<int>{0, 2, 1, 0}), 0.75);
  EXPECT_THROW(accuracy(Tensor::zeros({0 + 1, 3}), std::vector<int>{}), std::invalid_argument);
}

TEST(Reward, RandomLogitsGiveChanceAccuracy) {
  Rng rng(14);
  double total = 0;
  const int batches = 400, n = 50;
  for (int b = 0; b < batches; ++b) {
    Tensor logits = Tensor::zeros({n, 10}, DType::f64);
    for (std::int64_t i = 0; i < logits.numel(); ++i) logits.set(i, rng.normal());
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_int(10)));
    total += accuracy(logits, labels);
  }
  // Standard error of the mean over 20000 Bernoulli(0.1) draws is ~0.0021.
  EXPECT_NEAR(total / batches, 0.1, 0.01);
}
