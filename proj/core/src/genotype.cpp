// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/genotype.hpp"

#include <fstream>
#include <sstream>

namespace shufflenas {

namespace {
constexpr std::array<std::string_view, kNumOperations> kOperationNames = {
    "SEP3", "SEP5", "MAXPOOL3", "MINPOOL3", "IDENTITY", "CONV1"};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}
}  // namespace

std::string_view operation_name(OperationId op) {
  return kOperationNames.at(static_cast<std::size_t>(op));
}

std::optional<OperationId> parse_operation(std::string_view name) {
  for (int i = 0; i < kNumOperations; ++i)
    if (kOperationNames[static_cast<std::size_t>(i)] == name) return static_cast<OperationId>(i);
  return std::nullopt;
}

OperationId operation_from_code(int code) {
  if (code < 0 || code >= kNumOperations)
    throw std::invalid_argument("unknown operation code " + std::to_string(code));
  return static_cast<OperationId>(code);
}

std::string_view cell_type_name(CellType type) {
  return type == CellType::normal ? "normal" : "reduction";
}

std::vector<std::string> validate(const CellGenotype& cell) {
  std::vector<std::string> errors;
  const std::string prefix = std::string(cell_type_name(cell.type)) + " cell: ";
  if (cell.blocks.empty()) {
    errors.push_back(prefix + "genotype is empty (B must be >= 1)");
    return errors;
  }
  for (int b = 1; b <= cell.size(); ++b) {
    const BlockSpec& spec = cell.blocks[static_cast<std::size_t>(b - 1)];
    const std::string where = prefix + "block " + std::to_string(b) + ": ";
    if (operation_code(spec.op) < 0 || operation_code(spec.op) >= kNumOperations)
      errors.push_back(where + "unknown operation code " + std::to_string(operation_code(spec.op)));
    if (spec.input_index < 0) {
      errors.push_back(where + "input index " + std::to_string(spec.input_index) +
                       " out of range [0, " + std::to_string(b - 1) + "]");
    } else if (b == 1 && spec.input_index != 0) {
      errors.push_back(where + "block 1 must use input 0, got " +
                       std::to_string(spec.input_index));
    } else if (spec.input_index >= b) {
      errors.push_back(where + "forward reference: block " + std::to_string(b) +
                       " references block " + std::to_string(spec.input_index));
    }
  }
  return errors;
}

std::vector<std::string> validate(const Genotype& genotype) {
  auto errors = validate(genotype.normal);
  auto more = validate(genotype.reduction);
  errors.insert(errors.end(), more.begin(), more.end());
  if (genotype.normal.type != CellType::normal)
    errors.push_back("normal slot holds a reduction cell");
  if (genotype.reduction.type != CellType::reduction)
    errors.push_back("reduction slot holds a normal cell");
  if (genotype.normal.size() != genotype.reduction.size())
    errors.push_back("normal and reduction cells differ in block count (" +
                     std::to_string(genotype.normal.size()) + " vs " +
                     std::to_string(genotype.reduction.size()) + ")");
  return errors;
}

void require_valid(const Genotype& genotype) {
  auto errors = validate(genotype);
  if (errors.empty()) return;
  std::string message = "invalid genotype:";
  for (const auto& e : errors) message += "\n  " + e;
  throw std::invalid_argument(message);
}

std::set<int> loose_ends(const CellGenotype& cell) {
  std::vector<bool> consumed(cell.blocks.size() + 1, false);
  for (const auto& spec : cell.blocks)
    if (spec.input_index >= 0 && spec.input_index <= cell.size())
      consumed[static_cast<std::size_t>(spec.input_index)] = true;
  std::set<int> loose;
  for (int b = 1; b <= cell.size(); ++b)
    if (!consumed[static_cast<std::size_t>(b)]) loose.insert(b);
  return loose;
}

CellGenotype embed(const CellGenotype& cell, int target_blocks) {
  if (target_blocks < cell.size())
    throw std::invalid_argument("embed: target B " + std::to_string(target_blocks) +
                                " is smaller than the cell's B " + std::to_string(cell.size()));
  CellGenotype out = cell;
  while (out.size() < target_blocks) {
    const int lowest = *loose_ends(out).begin();
    out.blocks.push_back({lowest, OperationId::IDENTITY});
  }
  return out;
}

Genotype embed(const Genotype& genotype, int target_blocks) {
  return {embed(genotype.normal, target_blocks), embed(genotype.reduction, target_blocks)};
}

CellGenotype random_cell(Rng& rng, int blocks, CellType type) {
  if (blocks < 1) throw std::invalid_argument("random_cell: B must be >= 1");
  CellGenotype cell{type, {}};
  for (int b = 1; b <= blocks; ++b) {
    const int index = static_cast<int>(rng.uniform_int(b));
    const auto op = operation_from_code(static_cast<int>(rng.uniform_int(kNumOperations)));
    cell.blocks.push_back({index, op});
  }
  return cell;
}

Genotype random_genotype(Rng& rng, int blocks) {
  Genotype g;
  g.normal = random_cell(rng, blocks, CellType::normal);
  g.reduction = random_cell(rng, blocks, CellType::reduction);
  return g;
}

std::string encode(const CellGenotype& cell) {
  std::string out(cell_type_name(cell.type));
  out += ':';
  for (std::size_t i = 0; i < cell.blocks.size(); ++i) {
    out += i ? " | " : " ";
    out += std::to_string(cell.blocks[i].input_index);
    out += ' ';
    out += operation_name(cell.blocks[i].op);
  }
  return out;
}

std::string encode(const Genotype& genotype) {
  return encode(genotype.normal) + "\n" + encode(genotype.reduction) + "\n";
}

GenotypeParseError::GenotypeParseError(int line, const std::string& message)
    : std::invalid_argument("genotype line " + std::to_string(line) + ": " + message),
      line_(line) {}

Genotype decode(const std::string& text) {
  std::optional<CellGenotype> normal, reduction;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw GenotypeParseError(line_no, "expected '<cell_type>: ...', got '" + line + "'");
    const std::string type_name = trim(std::string_view(line).substr(0, colon));
    CellGenotype cell;
    if (type_name == "normal")
      cell.type = CellType::normal;
    else if (type_name == "reduction")
      cell.type = CellType::reduction;
    else
      throw GenotypeParseError(line_no, "unknown cell type '" + type_name + "'");

    std::istringstream blocks(line.substr(colon + 1));
    std::string chunk;
    while (std::getline(blocks, chunk, '|')) {
      std::istringstream fields(chunk);
      std::string index_text, op_text, extra;
      if (!(fields >> index_text >> op_text) || (fields >> extra))
        throw GenotypeParseError(line_no, "expected '<index> <OP>', got '" + trim(chunk) + "'");
      int index = 0;
      try {
        std::size_t used = 0;
        index = std::stoi(index_text, &used);
        if (used != index_text.size()) throw std::invalid_argument(index_text);
      } catch (const std::exception&) {
        throw GenotypeParseError(line_no, "input index '" + index_text + "' is not an integer");
      }
      auto op = parse_operation(op_text);
      if (!op) throw GenotypeParseError(line_no, "unknown operation '" + op_text + "'");
      cell.blocks.push_back({index, *op});
    }
    auto errors = validate(cell);
    if (!errors.empty()) throw GenotypeParseError(line_no, errors.front());
    auto& slot = cell.type == CellType::normal ? normal : reduction;
    if (slot) throw GenotypeParseError(line_no, "duplicate " + type_name + " cell");
    slot = std::move(cell);
  }
  if (!normal) throw GenotypeParseError(line_no, "missing normal cell line");
  if (!reduction) throw GenotypeParseError(line_no, "missing reduction cell line");
  if (normal->size() != reduction->size())
    throw GenotypeParseError(line_no, "normal and reduction cells differ in block count");
  return {*normal, *reduction};
}

Genotype load_genotype(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open genotype file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode(ss.str());
}

void save_genotype(const std::string& path, const Genotype& genotype) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << encode(genotype);
}

}  // namespace shufflenas
