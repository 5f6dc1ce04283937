// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "shufflenas/parameters.hpp"
#include "shufflenas/tensor.hpp"

namespace shufflenas {

/// Flat container of named tensors plus string metadata.
///
/// File layout (all integers little-endian):
///   magic "SNASCKPT" | u32 version | u32 tensor count
///   per tensor: u32 id length | id bytes | u8 dtype | u32 rank | i64 extents[rank]
///               | element payload (IEEE-754, little-endian)
///   u32 metadata count | per entry: u32 key length | key | u32 value length | value
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;

  /// Adds every registry entry under prefix + id.
  void add_registry(const ParameterRegistry& registry, const std::string& prefix = "");
  /// Copies values back into an existing registry; every entry must be present
  /// with identical shape and dtype.
  void restore_registry(ParameterRegistry& registry, const std::string& prefix = "") const;

  const std::string& meta_at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Lossless text form of a double for checkpoint metadata (hex float).
std::string exact_double(double value);
double parse_exact_double(const std::string& text);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace shufflenas
