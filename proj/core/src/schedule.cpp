// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace shufflenas {

void TrainSchedule::validate() const {
  if (!(t0 > 0)) throw std::invalid_argument("schedule: T0 must be positive");
  if (!(t_mult >= 1)) throw std::invalid_argument("schedule: Tmult must be >= 1");
  if (cycles < 1) throw std::invalid_argument("schedule: need at least one cycle");
  if (!(lr_max >= lr_min) || lr_min < 0)
    throw std::invalid_argument("schedule: need 0 <= lr_min <= lr_max");
  if (batch_size < 1) throw std::invalid_argument("schedule: batch size must be >= 1");
}

double TrainSchedule::total_epochs() const {
  double total = 0, length = t0;
  for (int i = 0; i < cycles; ++i, length *= t_mult) total += length;
  return total;
}

std::vector<double> TrainSchedule::restart_epochs() const {
  std::vector<double> out;
  double start = 0, length = t0;
  for (int i = 0; i < cycles; ++i, length *= t_mult) {
    start += length;
    out.push_back(start);
  }
  return out;
}

double cosine_lr(double global_epoch, const TrainSchedule& schedule) {
  schedule.validate();
  if (!(global_epoch >= 0) || global_epoch >= schedule.total_epochs())
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(global_epoch) +
                                " outside [0, " + std::to_string(schedule.total_epochs()) + ")");
  double start = 0, length = schedule.t0;
  while (global_epoch >= start + length) {
    start += length;
    length *= schedule.t_mult;
  }
  const double t = global_epoch - start;
  return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) *
                               (1.0 + std::cos(std::numbers::pi * t / length));
}

}  // namespace shufflenas
