// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace shufflenas {

/// Cosine annealing with warm restarts; cycle i lasts t0 * t_mult^i epochs.
struct TrainSchedule {
  double t0 = 10;
  double t_mult = 2;
  int cycles = 6;
  double lr_max = 0.05;
  double lr_min = 5e-4;
  int batch_size = 144;

  double total_epochs() const;
  /// Epochs at which a new cycle starts, excluding 0; the last equals
  /// total_epochs().
  std::vector<double> restart_epochs() const;
  /// Throws std::invalid_argument on non-positive or inconsistent fields.
  void validate() const;
};

/// Learning rate at a (fractional) global epoch in [0, total_epochs).
double cosine_lr(double global_epoch, const TrainSchedule& schedule);

}  // namespace shufflenas
