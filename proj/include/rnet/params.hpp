// Copyright 2026 The rnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "rnet/errors.hpp"
#include "rnet/tensor.hpp"

namespace rnet {

using Rng = std::mt19937_64;

/// Owns Parameters at stable addresses and hands out sequential ids.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t first_id = 0) : next_id_(first_id) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& create(Tensor value) {
    params_.emplace_back(std::move(value), next_id_++);
    return params_.back();
  }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t size() const { return params_.size(); }
  std::uint64_t next_id() const { return next_id_; }

 private:
  std::deque<Parameter> params_;
  std::uint64_t next_id_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(fan_out * fan_in);
  for (auto& v : w) v = dist(rng);
  return Tensor::matrix(fan_out, fan_in, std::move(w));
}

inline std::size_t parameter_count(std::span<Parameter* const> params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

// Checkpoint framing: "RNTN", u32 version, then per tensor
// (u64 id, u32 rank, u64 dims[rank], f64 data[]) until end of stream.
// All integers and floats little-endian.
namespace checkpoint {

inline constexpr char kMagic[4] = {'R', 'N', 'T', 'N'};
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::uint64_t id = 0;
  Tensor value;
};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<std::size_t>(is.gcount()) == sizeof(T);
}

}  // namespace detail

inline void write(std::ostream& os, std::span<const Entry> entries) {
  os.write(kMagic, 4);
  detail::put<std::uint32_t>(os, kVersion);
  for (const auto& e : entries) {
    detail::put<std::uint64_t>(os, e.id);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) detail::put<std::uint64_t>(os, d);
    for (double v : e.value.data()) detail::put<double>(os, v);
  }
  if (!os) throw FormatError("checkpoint write failed");
}

inline std::vector<Entry> read(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic at offset 0");
  std::uint32_t version = 0;
  if (!detail::get(is, version)) throw FormatError("checkpoint: truncated header at offset 4");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  std::vector<Entry> out;
  std::uint64_t offset = 8;
  while (is.peek() != std::char_traits<char>::eof()) {
    Entry e;
    std::uint32_t rank = 0;
    if (!detail::get(is, e.id) || !detail::get(is, rank)) {
      throw FormatError("checkpoint: truncated entry header at offset " + std::to_string(offset));
    }
    offset += 12;
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank at offset " + std::to_string(offset - 4));
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::get(is, v)) throw FormatError("checkpoint: truncated dims at offset " + std::to_string(offset));
      d = static_cast<std::size_t>(v);
      offset += 8;
    }
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) {
      if (!detail::get(is, v)) throw FormatError("checkpoint: truncated data at offset " + std::to_string(offset));
      offset += 8;
    }
    e.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(e));
  }
  return out;
}

inline void save(const std::string& path, std::span<const Entry> entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write(os, entries);
}

inline std::vector<Entry> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read(is);
}

/// Copies checkpoint values into the tensors with matching ids.
inline void restore(std::span<const Entry> entries, const std::map<std::uint64_t, Tensor*>& targets) {
  for (const auto& e : entries) {
    auto it = targets.find(e.id);
    if (it == targets.end()) throw FormatError("checkpoint: unknown tensor id " + std::to_string(e.id));
    if (it->second->shape() != e.value.shape()) {
      throw DimensionError("checkpoint: tensor " + std::to_string(e.id) + " has shape " +
                           shape_string(e.value.shape()) + ", expected " + shape_string(it->second->shape()));
    }
    *it->second = e.value;
  }
}

}  // namespace checkpoint

}  // namespace rnet
