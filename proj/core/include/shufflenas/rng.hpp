// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace shufflenas {

/// Seedable pseudorandom source. All samplers are implemented here on top of
/// the raw engine so sequences are identical across standard libraries and
/// the full state is captured by the engine alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Samples an index from unnormalized non-negative weights.
  std::size_t categorical(const double* weights, std::size_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);
/// Deterministic child seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

}  // namespace shufflenas
