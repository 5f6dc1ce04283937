// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace shufflenas {

/// Candidate operations of a cell block. The integer codes are stable and
/// double as controller output indices.
enum class OperationId : std::uint8_t {
  SEP3 = 0,
  SEP5 = 1,
  MAXPOOL3 = 2,
  MINPOOL3 = 3,
  IDENTITY = 4,
  CONV1 = 5,
};

inline constexpr int kNumOperations = 6;

inline constexpr std::array<OperationId, kNumOperations> kAllOperations = {
    OperationId::SEP3,     OperationId::SEP5,     OperationId::MAXPOOL3,
    OperationId::MINPOOL3, OperationId::IDENTITY, OperationId::CONV1};

std::string_view operation_name(OperationId op);
std::optional<OperationId> parse_operation(std::string_view name);
/// Throws std::invalid_argument for codes outside 0..5.
OperationId operation_from_code(int code);

inline int operation_code(OperationId op) { return static_cast<int>(op); }

}  // namespace shufflenas
