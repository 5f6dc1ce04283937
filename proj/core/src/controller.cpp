// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/controller.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "shufflenas/ops.hpp"
#include "shufflenas/supernet.hpp"
#include "shufflenas/tape.hpp"

namespace shufflenas {

namespace {
constexpr DType kDType = DType::f64;
constexpr int kInputWidth = ModelConfig::kMaxBlocks;
}  // namespace

double SampleTrace::total_log_prob() const {
  return std::accumulate(log_probs.begin(), log_probs.end(), 0.0);
}

double SampleTrace::mean_entropy() const {
  if (entropies.empty()) return 0;
  return std::accumulate(entropies.begin(), entropies.end(), 0.0) /
         static_cast<double>(entropies.size());
}

Controller::Controller(ControllerConfig config) : config_(config) {
  if (config_.hidden < 1) throw std::invalid_argument("controller: hidden size must be >= 1");
  if (!(config_.temperature > 0)) throw std::invalid_argument("controller: temperature must be > 0");
  const std::int64_t H = config_.hidden;
  const auto seed = config_.seed;
  registry_.create("ctrl/lstm/wx", {H, 4 * H}, kDType, Init::uniform_01, seed);
  registry_.create("ctrl/lstm/wh", {H, 4 * H}, kDType, Init::uniform_01, seed);
  registry_.create("ctrl/lstm/b", {4 * H}, kDType, Init::zeros, seed);
  registry_.create("ctrl/start", {1, H}, kDType, Init::uniform_01, seed);
  registry_.create("ctrl/embed/input", {kInputWidth, H}, kDType, Init::uniform_01, seed);
  registry_.create("ctrl/embed/op", {kNumOperations, H}, kDType, Init::uniform_01, seed);
  // Zero heads: the untrained policy is exactly uniform.
  registry_.create("ctrl/head/input/w", {H, kInputWidth}, kDType, Init::zeros, seed);
  registry_.create("ctrl/head/input/b", {kInputWidth}, kDType, Init::zeros, seed);
  registry_.create("ctrl/head/op/w", {H, kNumOperations}, kDType, Init::zeros, seed);
  registry_.create("ctrl/head/op/b", {kNumOperations}, kDType, Init::zeros, seed);
}

SampleTrace Controller::run(int blocks, Rng* rng, const SampleTrace* forced,
                            Tensor* total_log_prob, Tensor* total_entropy) {
  if (blocks < 1 || blocks > kInputWidth)
    throw std::invalid_argument("controller: B must be in [1, " + std::to_string(kInputWidth) +
                                "], got " + std::to_string(blocks));
  const std::size_t steps = static_cast<std::size_t>(4 * blocks);
  if (forced && forced->decisions.size() != steps)
    throw std::invalid_argument("controller: trace has " +
                                std::to_string(forced->decisions.size()) + " decisions, expected " +
                                std::to_string(steps));
  const std::int64_t H = config_.hidden;
  auto& reg = registry_;
  Tensor h = Tensor::zeros({1, H}, kDType);
  Tensor c = Tensor::zeros({1, H}, kDType);
  Tensor x = reg.tensor("ctrl/start");
  SampleTrace trace;
  std::vector<Tensor> log_probs, entropies;

  for (int cell = 0; cell < 2; ++cell) {
    for (int b = 1; b <= blocks; ++b) {
      for (DecisionKind kind : {DecisionKind::input, DecisionKind::op}) {
        Tensor gates = ops::add_row(
            ops::add(ops::matmul(x, reg.tensor("ctrl/lstm/wx")), ops::matmul(h, reg.tensor("ctrl/lstm/wh"))),
            reg.tensor("ctrl/lstm/b"));
        Tensor in_gate = ops::sigmoid(ops::slice_cols(gates, 0, H));
        Tensor forget_gate = ops::sigmoid(ops::slice_cols(gates, H, H));
        Tensor cand = ops::tanh(ops::slice_cols(gates, 2 * H, H));
        Tensor out_gate = ops::sigmoid(ops::slice_cols(gates, 3 * H, H));
        c = ops::add(ops::mul(forget_gate, c), ops::mul(in_gate, cand));
        h = ops::mul(out_gate, ops::tanh(c));

        const bool is_input = kind == DecisionKind::input;
        const std::string head = is_input ? "ctrl/head/input" : "ctrl/head/op";
        Tensor logits = ops::add_row(ops::matmul(h, reg.tensor(head + "/w")), reg.tensor(head + "/b"));
        const int width = is_input ? kInputWidth : kNumOperations;
        const int valid = is_input ? b : kNumOperations;
        if (valid < width) logits = ops::slice_cols(logits, 0, valid);
        if (config_.temperature != 1.0) logits = ops::scale(logits, 1.0 / config_.temperature);
        Tensor log_p = ops::log_softmax(logits);

        std::vector<double> probs(static_cast<std::size_t>(width), 0.0);
        for (int i = 0; i < valid; ++i) probs[static_cast<std::size_t>(i)] = std::exp(log_p.at(i));

        const std::size_t t = trace.decisions.size();
        int decision = 0;
        if (forced) {
          decision = forced->decisions[t];
          if (decision < 0 || decision >= valid)
            throw std::invalid_argument("controller: replayed decision " + std::to_string(decision) +
                                        " outside [0, " + std::to_string(valid) + ")");
        } else if (valid > 1) {
          decision = static_cast<int>(rng->categorical(probs.data(), static_cast<std::size_t>(valid)));
        }

        Tensor lp = ops::pick(log_p, decision);
        Tensor ent = ops::scale(ops::sum(ops::mul(ops::exp(log_p), log_p)), -1.0);
        trace.kinds.push_back(kind);
        trace.decisions.push_back(decision);
        trace.log_probs.push_back(lp.item());
        trace.entropies.push_back(ent.item());
        trace.distributions.push_back(std::move(probs));
        log_probs.push_back(lp);
        entropies.push_back(ent);

        x = ops::select_row(reg.tensor(is_input ? "ctrl/embed/input" : "ctrl/embed/op"), decision);
      }
    }
  }
  if (total_log_prob) *total_log_prob = ops::add_n(log_probs);
  if (total_entropy) *total_entropy = ops::add_n(entropies);
  return trace;
}

Genotype Controller::genotype_of(const SampleTrace& trace, int blocks) {
  if (trace.decisions.size() != static_cast<std::size_t>(4 * blocks))
    throw std::invalid_argument("genotype_of: decision count does not match B");
  Genotype g;
  std::size_t t = 0;
  for (CellGenotype* cell : {&g.normal, &g.reduction}) {
    for (int b = 0; b < blocks; ++b) {
      const int index = trace.decisions[t++];
      const OperationId op = operation_from_code(trace.decisions[t++]);
      cell->blocks.push_back({index, op});
    }
  }
  return g;
}

std::pair<Genotype, SampleTrace> Controller::sample(int blocks, Rng& rng) {
  NoGradScope no_grad;
  SampleTrace trace = run(blocks, &rng, nullptr, nullptr, nullptr);
  return {genotype_of(trace, blocks), std::move(trace)};
}

std::pair<double, double> Controller::score(const SampleTrace& trace) {
  NoGradScope no_grad;
  const int blocks = static_cast<int>(trace.decisions.size() / 4);
  SampleTrace replay = run(blocks, nullptr, &trace, nullptr, nullptr);
  return {replay.total_log_prob(), replay.mean_entropy()};
}

UpdateStats Controller::reinforce_update(std::span<const SampleTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("reinforce_update: no traces");
  double mean_reward = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!traces[i].reward)
      throw std::invalid_argument("reinforce_update: trace " + std::to_string(i) + " has no reward");
    mean_reward += *traces[i].reward;
  }
  const double n = static_cast<double>(traces.size());
  mean_reward /= n;
  if (!baseline_) baseline_ = mean_reward;

  UpdateStats stats;
  stats.mean_reward = mean_reward;
  stats.baseline_before = *baseline_;

  registry_.zero_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    std::vector<Tensor> terms;
    for (const auto& trace : traces) {
      Tensor log_prob, entropy;
      const int blocks = static_cast<int>(trace.decisions.size() / 4);
      SampleTrace replay = run(blocks, nullptr, &trace, &log_prob, &entropy);
      const double advantage = *trace.reward - *baseline_;
      const double decisions = static_cast<double>(replay.decisions.size());
      terms.push_back(ops::scale(log_prob, -advantage / n));
      terms.push_back(ops::scale(entropy, -config_.entropy_weight / (n * decisions)));
      stats.mean_entropy += replay.mean_entropy() / n;
    }
    loss = ops::add_n(terms);
  }
  tape.backward(loss);
  adam_.step(registry_, config_.lr);
  registry_.zero_grad();

  stats.loss = loss.item();
  baseline_ = config_.baseline_decay * *baseline_ + (1.0 - config_.baseline_decay) * mean_reward;
  stats.baseline_after = *baseline_;
  return stats;
}

void Controller::save(Checkpoint& checkpoint, const std::string& prefix) const {
  checkpoint.add_registry(registry_, prefix + "params/");
  adam_.save(checkpoint, prefix + "adam/");
  checkpoint.meta[prefix + "baseline"] = baseline_ ? exact_double(*baseline_) : "none";
}

void Controller::load(const Checkpoint& checkpoint, const std::string& prefix) {
  checkpoint.restore_registry(registry_, prefix + "params/");
  adam_.load(checkpoint, prefix + "adam/");
  const std::string& b = checkpoint.meta_at(prefix + "baseline");
  if (b == "none")
    baseline_.reset();
  else
    baseline_ = parse_exact_double(b);
}

}  // namespace shufflenas
