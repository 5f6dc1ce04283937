// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shufflenas/supernet.hpp"
#include "shufflenas/trainer.hpp"

namespace shufflenas::cli {

/// Every knob of one command. Written to `config.txt` in the run directory
/// as `key = value` lines; reading that file back reproduces the run.
struct RunConfig {
  std::string command;

  // model
  int blocks = 5;
  int repeats = 5;
  std::int64_t filters = 32;
  std::string merge = "sum";
  bool cell_bn = false;
  std::string bypass = "factorized";
  std::optional<double> drop_path_keep;
  std::string min_pool = "min";
  bool f64 = false;

  // schedule and optimizer
  int epochs = 630;
  int batch_size = 144;
  double lr_max = 0.05;
  double lr_min = 5e-4;
  double t0 = 10;
  double t_mult = 2;
  int cycles = 6;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 5.0;
  bool augment = true;
  bool cutout = false;

  // search
  int controller_samples = 10;
  std::string weight_phase = "fresh";
  double controller_lr = 3.5e-4;
  double entropy_weight = 1e-4;
  int derive_samples = 100;
  int derive_batches = 10;
  std::int64_t max_train_batches = 0;
  bool resume = false;

  // data
  std::string data_dir;
  bool synthetic = false;
  std::string synthetic_kind = "striped_patterns";
  std::int64_t synthetic_train = 512;
  std::int64_t synthetic_val = 160;
  std::int64_t synthetic_test = 160;

  std::uint64_t seed = 0;
  std::string out_dir;
  std::string genotype;
  std::string checkpoint;

  // analysis and benchmarking
  bool dot = false;
  std::string batches = "1,8,32,64";
  int iters = 1000;
  int warmup = 50;
  bool compare_enas = true;

  /// Makes every default explicit (drop-path keep probability).
  void resolve();
  /// Throws ConfigError.
  void validate() const;
  std::string to_text() const;
  /// Throws ConfigError on unknown keys or malformed values.
  static RunConfig parse(const std::string& text);

  ModelConfig model_config(int num_classes) const;
  TrainerConfig trainer_config() const;
  std::vector<std::int64_t> batch_list() const;
};

}  // namespace shufflenas::cli
