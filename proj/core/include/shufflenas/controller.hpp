// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "shufflenas/checkpoint.hpp"
#include "shufflenas/genotype.hpp"
#include "shufflenas/optim.hpp"
#include "shufflenas/parameters.hpp"
#include "shufflenas/rng.hpp"

namespace shufflenas {

struct ControllerConfig {
  int hidden = 100;
  double lr = 3.5e-4;
  double entropy_weight = 1e-4;
  double baseline_decay = 0.99;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

enum class DecisionKind { input, op };

/// One sampled architecture: for each cell (normal, then reduction) and each
/// block, an input index followed by an operation.
struct SampleTrace {
  std::vector<DecisionKind> kinds;
  std::vector<int> decisions;
  std::vector<double> log_probs;
  std::vector<double> entropies;
  /// Full-width distribution per decision; masked entries are exactly 0.
  std::vector<std::vector<double>> distributions;
  std::optional<double> reward;

  double total_log_prob() const;
  double mean_entropy() const;
};

struct UpdateStats {
  double loss = 0;
  double mean_reward = 0;
  double baseline_before = 0;
  double baseline_after = 0;
  double mean_entropy = 0;
};

/// Recurrent policy over genotypes trained with REINFORCE.
class Controller {
 public:
  explicit Controller(ControllerConfig config = {});

  std::pair<Genotype, SampleTrace> sample(int blocks, Rng& rng);

  /// Log-probability and mean entropy of a fixed decision sequence under the
  /// current policy.
  std::pair<double, double> score(const SampleTrace& trace);

  /// One Adam step on -mean[(r - baseline) * sum log p] - w_ent * mean
  /// entropy, then the moving-average baseline update. The baseline starts
  /// at the mean reward of the first update.
  UpdateStats reinforce_update(std::span<const SampleTrace> traces);

  const ControllerConfig& config() const { return config_; }
  ParameterRegistry& parameters() { return registry_; }
  std::optional<double> baseline() const { return baseline_; }
  void set_baseline(double value) { baseline_ = value; }

  void save(Checkpoint& checkpoint, const std::string& prefix) const;
  void load(const Checkpoint& checkpoint, const std::string& prefix);

  /// Decodes a trace's decisions into a genotype.
  static Genotype genotype_of(const SampleTrace& trace, int blocks);

 private:
  /// Runs the recurrent pass; `forced` replays decisions instead of sampling.
  SampleTrace run(int blocks, Rng* rng, const SampleTrace* forced, Tensor* total_log_prob,
                  Tensor* total_entropy);

  ControllerConfig config_;
  ParameterRegistry registry_;
  Adam adam_;
  std::optional<double> baseline_;
};

}  // namespace shufflenas
