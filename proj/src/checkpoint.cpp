// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

constexpr char kMagic[4] = {'N', 'R', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kMagic, 4);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double x : t.values()) put_f64(out, x);
  }
  return out;
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not an NRT1 checkpoint");
  }
  Reader r(bytes);
  r.str(4);
  NamedTensors out;
  while (!r.done()) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(shape_size(shape));
    for (auto& x : data) x = r.f64();
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParameterStore& store) {
  NamedTensors tensors;
  for (const auto& p : store) tensors.emplace_back(p.name, p.value);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(tensors);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

NamedTensors read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::size_t load_checkpoint_into(const std::string& path, ParameterStore& store,
                                 bool require_all) {
  std::size_t restored = 0;
  std::vector<bool> seen(store.size(), false);
  for (auto& [name, t] : read_checkpoint(path)) {
    if (!store.contains(name)) continue;
    auto idx = store.index(name);
    if (store[idx].value.shape() != t.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                      ", model expects " + shape_str(store[idx].value.shape()));
    }
    store[idx].value = std::move(t);
    seen[idx] = true;
    ++restored;
  }
  if (require_all) {
    for (std::size_t i = 0; i < store.size(); ++i)
      if (!seen[i]) throw DataError("checkpoint lacks parameter " + store[i].name);
  }
  return restored;
}

}  // namespace newsrec
