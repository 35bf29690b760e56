// SPDX-License-Identifier: Apache-2.0
#pragma once

// Weight file layout (all integers little-endian):
//   magic "SELDW1\0" (7 bytes), u32 entry count, then per entry:
//   u16 name length, UTF-8 name, u8 dtype (0 = float32, 1 = float64),
//   u8 rank, rank x u32 dims, raw little-endian values.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "seld/error.hpp"
#include "seld/models.hpp"
#include "seld/tensor.hpp"

namespace seld {

enum class DType : std::uint8_t { float32 = 0, float64 = 1 };

using StoredTensor = std::variant<Tensor<float>, Tensor<double>>;

inline DType dtype_of(const StoredTensor& t) {
  return std::holds_alternative<Tensor<float>>(t) ? DType::float32 : DType::float64;
}

inline const Shape& shape_of(const StoredTensor& t) {
  return std::visit([](const auto& x) -> const Shape& { return x.shape(); }, t);
}

/// Insertion-ordered name -> tensor map with unique names.
class WeightStore {
 public:
  void add(std::string name, StoredTensor tensor) {
    if (name.empty() || name.size() > 0xFFFF) throw FormatError("invalid tensor name length");
    if (!names_.insert(name).second) throw FormatError("duplicate tensor name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  const StoredTensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  template <typename T>
  Tensor<T> get(const std::string& name) const {
    const StoredTensor* t = find(name);
    if (!t) throw FormatError("missing tensor '" + name + "'");
    return std::visit([](const auto& x) { return x.template cast<T>(); }, *t);
  }

  const std::vector<std::pair<std::string, StoredTensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::uint64_t element_count() const {
    std::uint64_t n = 0;
    for (const auto& e : entries_) n += shape_size(shape_of(e.second));
    return n;
  }

  friend bool operator==(const WeightStore& a, const WeightStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, StoredTensor>> entries_;
  std::unordered_set<std::string> names_;
};

inline constexpr std::array<char, 7> kWeightMagic = {'S', 'E', 'L', 'D', 'W', '1', '\0'};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw FormatError(std::string("weight file truncated while reading ") + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename F>
using float_bits_t = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;

template <typename F>
void put_values(std::ostream& out, const Tensor<F>& t) {
  for (F v : t.vec()) {
    float_bits_t<F> bits;
    std::memcpy(&bits, &v, sizeof(F));
    put_le(out, bits);
  }
}

template <typename F>
Tensor<F> get_values(std::istream& in, Shape shape) {
  std::vector<F> data(shape_size(shape));
  for (auto& v : data) {
    const auto bits = get_le<float_bits_t<F>>(in, "tensor values");
    std::memcpy(&v, &bits, sizeof(F));
  }
  return Tensor<F>(std::move(shape), std::move(data));
}

}  // namespace detail

inline void write_weights(std::ostream& out, const WeightStore& store) {
  out.write(kWeightMagic.data(), kWeightMagic.size());
  detail::put_le(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, tensor] : store.entries()) {
    detail::put_le(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(dtype_of(tensor)));
    const Shape& shape = shape_of(tensor);
    if (shape.size() > 255) throw FormatError("tensor rank exceeds 255");
    out.put(static_cast<char>(shape.size()));
    for (auto d : shape) {
      if (d > 0xFFFFFFFFu) throw FormatError("tensor dimension exceeds u32");
      detail::put_le(out, static_cast<std::uint32_t>(d));
    }
    std::visit([&](const auto& t) { detail::put_values(out, t); }, tensor);
  }
  if (!out) throw IoError("failed writing weight data");
}

inline WeightStore read_weights(std::istream& in) {
  std::array<char, 7> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kWeightMagic)
    throw FormatError("bad weight file magic");
  const auto count = detail::get_le<std::uint32_t>(in, "entry count");
  WeightStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = detail::get_le<std::uint16_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("weight file truncated in tensor name");
    const auto dtype = detail::get_le<std::uint8_t>(in, "dtype");
    const auto rank = detail::get_le<std::uint8_t>(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) {
      d = detail::get_le<std::uint32_t>(in, "dims");
      if (d == 0) throw FormatError("zero dimension in tensor '" + name + "'");
    }
    if (dtype == static_cast<std::uint8_t>(DType::float32))
      store.add(std::move(name), detail::get_values<float>(in, std::move(shape)));
    else if (dtype == static_cast<std::uint8_t>(DType::float64))
      store.add(std::move(name), detail::get_values<double>(in, std::move(shape)));
    else
      throw FormatError("unknown dtype code " + std::to_string(dtype));
  }
  return store;
}

inline void save_weights(const WeightStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_weights(out, store);
}

inline WeightStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file '" + path + "'");
  return read_weights(in);
}

/// Trainable parameters only; its element count equals count_params.
template <typename T>
WeightStore parameter_store(Model<T>& model) {
  WeightStore store;
  for (auto* p : model.parameters()) store.add(p->name, p->value);
  return store;
}

/// Parameters plus batch-norm running statistics: everything inference needs.
template <typename T>
WeightStore model_store(Model<T>& model) {
  WeightStore store = parameter_store(model);
  for (auto& b : model.buffers()) store.add(b.name, *b.tensor);
  return store;
}

/// Copies matching entries into the model. Every parameter and buffer must
/// be present with the right shape; extra entries are ignored.
template <typename T>
void load_into(Model<T>& model, const WeightStore& store) {
  for (auto* p : model.parameters()) {
    Tensor<T> t = store.get<T>(p->name);
    if (t.shape() != p->value.shape())
      throw FormatError("shape mismatch for '" + p->name + "': file " + shape_str(t.shape()) +
                        ", model " + shape_str(p->value.shape()));
    p->value = std::move(t);
  }
  for (auto& b : model.buffers()) {
    Tensor<T> t = store.get<T>(b.name);
    if (t.shape() != b.tensor->shape()) throw FormatError("shape mismatch for buffer '" + b.name + "'");
    *b.tensor = std::move(t);
    if (b.ready) *b.ready = true;
  }
}

}  // namespace seld
