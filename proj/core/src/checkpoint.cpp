// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace shufflenas {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'A', 'S', 'C', 'K', 'P', 'T'};

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add_registry(const ParameterRegistry& registry, const std::string& prefix) {
  for (const auto& [id, p] : registry) tensors[prefix + id] = p.tensor.clone();
}

void Checkpoint::restore_registry(ParameterRegistry& registry, const std::string& prefix) const {
  for (auto& [id, p] : registry) {
    auto it = tensors.find(prefix + id);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint is missing tensor '" + prefix + id + "'");
    p.tensor.assign(it->second);
  }
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw std::runtime_error("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [id, t] : checkpoint.tensors) {
    put_string(out, id);
    out.push_back(static_cast<char>(t.dtype()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) put_le<std::int64_t>(out, extent);
    visit_dtype(t.dtype(), [&](auto zero) {
      using T = decltype(zero);
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      for (T v : t.template data<T>()) put_le<Bits>(out, std::bit_cast<Bits>(v));
    });
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.meta.size()));
  for (const auto& [k, v] : checkpoint.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.get_string();
    const auto dtype_code = r.get<std::uint8_t>();
    if (dtype_code > 1) throw std::runtime_error("bad dtype code for '" + id + "'");
    const auto dtype = static_cast<DType>(dtype_code);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& extent : shape) extent = r.get<std::int64_t>();
    Tensor t = Tensor::zeros(shape, dtype);
    visit_dtype(dtype, [&](auto zero) {
      using T = decltype(zero);
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      for (T& v : t.template data<T>()) v = std::bit_cast<T>(r.get<Bits>());
    });
    ck.tensors.emplace(std::move(id), t);
  }
  const auto meta_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = r.get_string();
    ck.meta[k] = r.get_string();
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string exact_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", value);
  return buf;
}

double parse_exact_double(const std::string& text) {
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw std::runtime_error("malformed number '" + text + "' in checkpoint");
  return value;
}

}  // namespace shufflenas
