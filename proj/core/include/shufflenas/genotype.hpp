// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "shufflenas/operation.hpp"
#include "shufflenas/rng.hpp"

namespace shufflenas {

/// One block of a cell: an operation applied to the cell input (0) or to the
/// output of an earlier block (1-based).
struct BlockSpec {
  int input_index = 0;
  OperationId op = OperationId::IDENTITY;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

enum class CellType { normal, reduction };

std::string_view cell_type_name(CellType type);

struct CellGenotype {
  CellType type = CellType::normal;
  std::vector<BlockSpec> blocks;

  int size() const { return static_cast<int>(blocks.size()); }
  friend bool operator==(const CellGenotype&, const CellGenotype&) = default;
};

struct Genotype {
  CellGenotype normal{CellType::normal, {}};
  CellGenotype reduction{CellType::reduction, {}};

  int blocks() const { return normal.size(); }
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Structural errors; empty when the cell is valid.
std::vector<std::string> validate(const CellGenotype& cell);
std::vector<std::string> validate(const Genotype& genotype);
/// Throws std::invalid_argument listing all errors.
void require_valid(const Genotype& genotype);

/// 1-based indices of blocks whose output no later block consumes. The cell
/// output merges exactly these.
std::set<int> loose_ends(const CellGenotype& cell);

/// Pads a cell to `target_blocks` with identity blocks, each consuming the
/// lowest-indexed loose end, producing a cell that computes the same
/// function.
CellGenotype embed(const CellGenotype& cell, int target_blocks);
Genotype embed(const Genotype& genotype, int target_blocks);

CellGenotype random_cell(Rng& rng, int blocks, CellType type);
Genotype random_genotype(Rng& rng, int blocks);

/// Text form: one line per cell, `<type>: <idx> <OP> | <idx> <OP> | ...`.
std::string encode(const CellGenotype& cell);
std::string encode(const Genotype& genotype);
/// Accepts `#` comments and blank lines; requires exactly one normal and one
/// reduction line. Throws GenotypeParseError.
Genotype decode(const std::string& text);

class GenotypeParseError : public std::invalid_argument {
 public:
  GenotypeParseError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

Genotype load_genotype(const std::string& path);
void save_genotype(const std::string& path, const Genotype& genotype);

}  // namespace shufflenas
