// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shufflenas/checkpoint.hpp"
#include "shufflenas/controller.hpp"
#include "shufflenas/data.hpp"
#include "shufflenas/optim.hpp"
#include "shufflenas/schedule.hpp"
#include "shufflenas/supernet.hpp"

namespace shufflenas {

/// Which genotype the weight phase of a search epoch trains.
enum class WeightPhaseGenotype { fresh_sample, best_of_controller_phase };

struct TrainerConfig {
  TrainSchedule schedule;
  SgdConfig sgd;
  ControllerConfig controller;
  int controller_samples = 10;
  WeightPhaseGenotype weight_genotype = WeightPhaseGenotype::fresh_sample;
  bool augment = true;
  bool cutout = false;
  /// Batches per weight-phase epoch; 0 means the whole train split.
  std::int64_t max_train_batches = 0;
  int derive_samples = 100;
  int derive_batches = 10;
  std::uint64_t seed = 0;
};

struct DataBundle {
  Dataset train;
  Dataset val;
  Dataset test;
  Normalizer normalizer;  // fitted on train only
};

DataBundle make_bundle(Dataset train, Dataset val, Dataset test);
/// Train/val/test generated from independent streams of `seed`.
DataBundle make_synthetic_bundle(SyntheticKind kind, std::int64_t train_size,
                                 std::int64_t val_size, std::int64_t test_size,
                                 std::uint64_t seed);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

/// Top-1 accuracy of `genotype` on one batch, evaluation mode.
double reward_of(Network& net, const Genotype& genotype, const Batch& batch);

/// Error rate in evaluation mode over a dataset (or its first `max_batches`).
double evaluate_error(Network& net, const Genotype& genotype, const Dataset& data,
                      const Normalizer& normalizer, std::int64_t batch_size,
                      std::int64_t max_batches = 0);

struct EpochStats {
  double mean_loss = 0;
  double train_accuracy = 0;
  double last_lr = 0;
  std::int64_t batches = 0;
};

/// One SGD epoch of `genotype` over the shuffled train split, learning rate
/// annealed per step from `epoch`.
EpochStats train_epoch(Network& net, const Genotype& genotype, const DataBundle& data, Sgd& sgd,
                       const TrainerConfig& config, int epoch, Rng& data_rng, Rng& path_rng);

struct SearchRecord {
  int epoch = 0;
  double mean_reward = 0;
  double max_reward = 0;
  double baseline = 0;
  double entropy = 0;
  double train_loss = 0;
  double lr = 0;
  std::string genotype;  // weight-phase genotype, encoded on one line
};

std::string search_history_csv(const std::vector<SearchRecord>& history);

class SearchState {
 public:
  SearchState(const ModelConfig& model, const TrainerConfig& config);

  Network supernet;
  Controller controller;
  Sgd sgd;
  TrainerConfig config;
  int epoch = 0;
  Rng controller_rng;
  Rng data_rng;
  Rng path_rng;
  std::int64_t val_cursor = 0;
  std::vector<SearchRecord> history;

  Checkpoint to_checkpoint() const;
  /// The state must have been constructed with the same configuration.
  void restore(const Checkpoint& checkpoint);
};

/// Controller phase (sample, score on one validation batch each, one
/// REINFORCE step) followed by the weight phase (one epoch of SGD on one
/// genotype).
const SearchRecord& search_epoch(SearchState& state, const DataBundle& data);

/// Samples k genotypes from the controller and returns the highest-scoring
/// one (first on ties).
Genotype derive_best(Controller& controller, int blocks, int k, Rng& rng,
                     const std::function<double(const Genotype&)>& score);
/// Samples k genotypes, scores each on `batches` validation batches with
/// the shared weights and returns the best (first on ties).
Genotype derive_best(SearchState& state, const DataBundle& data, int k, int batches);

struct FinalRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_error = 0;
  double val_error = 0;
  double test_error = 0;
  double lr = 0;
};

std::string final_history_csv(const std::vector<FinalRecord>& history);

struct FinalResult {
  std::vector<FinalRecord> history;
  /// Mean test error over the last five epochs (fewer if shorter).
  double final_test_error = 0;
};

/// Trains a freshly initialised final model from scratch for `epochs`.
FinalResult train_final(Network& model, const DataBundle& data, const TrainerConfig& config,
                        int epochs, const std::function<void(const FinalRecord&)>& on_epoch = {});

}  // namespace shufflenas
