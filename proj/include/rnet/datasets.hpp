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

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rnet/errors.hpp"
#include "rnet/params.hpp"
#include "rnet/tensor.hpp"

namespace rnet {

/// One training or test instance. Features are shared between tasks that
/// reuse the same input with different labels.
struct MtlSample {
  std::shared_ptr<const Tensor> features;
  std::size_t task = 0;
  std::size_t label = 0;

  const Tensor& x() const { return *features; }
};

struct TaskSplit {
  std::vector<MtlSample> train;
  std::vector<MtlSample> test;
  std::vector<std::size_t> classes;  // label count per task

  std::size_t num_tasks() const { return classes.size(); }
  std::size_t input_dim() const { return train.empty() ? 0 : train.front().x().size(); }
  std::size_t max_classes() const { return classes.empty() ? 0 : *std::max_element(classes.begin(), classes.end()); }
};

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/// Standard normal via Box-Muller on uniform01.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle(std::vector<T>& xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[uniform_index(rng, i)]);
}

// ---------------------------------------------------------------------------
// IDX files
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxLabels = 0x00000801;
inline constexpr std::uint32_t kIdxImages = 0x00000803;

namespace idx_detail {

inline std::uint32_t read_be32(std::istream& is, const std::string& path, std::uint64_t offset) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (is.gcount() != 4) throw FormatError(path + ": truncated header at byte offset " + std::to_string(offset));
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

}  // namespace idx_detail

/// Loads a big-endian IDX file. Images (0x00000803) come back as [n, rows*cols]
/// scaled to [0, 1]; labels (0x00000801) as a length-n vector of raw values.
inline Tensor load_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  const std::uint32_t magic = idx_detail::read_be32(is, path, 0);
  std::vector<std::size_t> dims;
  if (magic == kIdxLabels) {
    dims.push_back(idx_detail::read_be32(is, path, 4));
  } else if (magic == kIdxImages) {
    for (int i = 0; i < 3; ++i) dims.push_back(idx_detail::read_be32(is, path, 4 + 4 * i));
  } else {
    std::ostringstream os;
    os << path << ": bad magic 0x" << std::hex << magic << " at byte offset 0";
    throw FormatError(os.str());
  }
  const std::uint64_t header = 4 + 4 * dims.size();
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count == 0) throw FormatError(path + ": empty payload declared in header");
  std::vector<unsigned char> raw(count);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  const auto got = static_cast<std::uint64_t>(is.gcount());
  if (got != count) {
    throw FormatError(path + ": truncated payload at byte offset " + std::to_string(header + got) + ", expected " +
                      std::to_string(header + count) + " bytes");
  }
  std::vector<double> data(raw.begin(), raw.end());
  if (magic == kIdxLabels) return Tensor({dims[0]}, std::move(data));
  for (auto& v : data) v /= 255.0;
  return Tensor({dims[0], dims[1] * dims[2]}, std::move(data));
}

inline void write_idx_images(const std::string& path, std::size_t rows, std::size_t cols,
                             std::span<const std::uint8_t> pixels) {
  if (rows * cols == 0 || pixels.size() % (rows * cols) != 0) throw DimensionError("idx image payload size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  idx_detail::write_be32(os, kIdxImages);
  idx_detail::write_be32(os, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  idx_detail::write_be32(os, static_cast<std::uint32_t>(rows));
  idx_detail::write_be32(os, static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  idx_detail::write_be32(os, kIdxLabels);
  idx_detail::write_be32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// MNIST-MTL: ten binary "digit c vs rest" tasks
// ---------------------------------------------------------------------------

struct MnistFiles {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  static MnistFiles in_directory(const std::string& dir) {
    return {dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte", dir + "/t10k-images-idx3-ubyte",
            dir + "/t10k-labels-idx1-ubyte"};
  }
};

struct MnistMtlSizes {
  std::size_t train_per_class = 1000;  // 1k positives + 1k of each negative digit
  std::size_t test_per_class = 20;     // 200 test samples per task
};

namespace mnist_detail {

// Rows are materialized only when drawn, and shared between tasks.
inline std::vector<MtlSample> draw(const Tensor& images, const Tensor& labels, std::size_t per_class, Rng& rng) {
  const std::size_t d = images.dim(1);
  std::vector<std::shared_ptr<const Tensor>> rows(images.dim(0));
  auto row = [&](std::size_t i) {
    if (!rows[i]) {
      std::vector<double> r(images.data().begin() + i * d, images.data().begin() + (i + 1) * d);
      rows[i] = std::make_shared<const Tensor>(Tensor::vector(std::move(r)));
    }
    return rows[i];
  };
  std::array<std::vector<std::size_t>, 10> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c > 9) throw FormatError("mnist label " + std::to_string(c) + " at index " + std::to_string(i));
    by_class[c].push_back(i);
  }
  std::vector<MtlSample> out;
  for (std::size_t task = 0; task < 10; ++task) {
    for (std::size_t c = 0; c < 10; ++c) {
      auto pool = by_class[c];
      if (pool.size() < per_class) {
        throw FormatError("mnist: digit " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                          " instances, need " + std::to_string(per_class));
      }
      // partial Fisher-Yates: without replacement within the task
      for (std::size_t i = 0; i < per_class; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
        out.push_back({row(pool[i]), task, c == task ? 1u : 0u});
      }
    }
  }
  return out;
}

}  // namespace mnist_detail

/// Builds the binary MNIST-MTL split from already loaded IDX tensors.
inline TaskSplit build_mnist_mtl(const Tensor& train_images, const Tensor& train_labels, const Tensor& test_images,
                                 const Tensor& test_labels, std::uint64_t seed, MnistMtlSizes sizes = {}) {
  if (train_images.rank() != 2 || train_images.dim(0) != train_labels.size() || test_images.rank() != 2 ||
      test_images.dim(0) != test_labels.size()) {
    throw FormatError("mnist: image and label counts disagree");
  }
  Rng rng(seed);
  TaskSplit split;
  split.classes.assign(10, 2);
  split.train = mnist_detail::draw(train_images, train_labels, sizes.train_per_class, rng);
  split.test = mnist_detail::draw(test_images, test_labels, sizes.test_per_class, rng);
  return split;
}

inline TaskSplit build_mnist_mtl(const MnistFiles& files, std::uint64_t seed, MnistMtlSizes sizes = {}) {
  return build_mnist_mtl(load_idx(files.train_images), load_idx(files.train_labels), load_idx(files.test_images),
                         load_idx(files.test_labels), seed, sizes);
}

// ---------------------------------------------------------------------------
// Synthetic interference benchmark
// ---------------------------------------------------------------------------

struct InterferenceOptions {
  std::size_t num_tasks = 4;
  std::size_t dim = 16;
  std::size_t samples_per_task = 2000;
  std::size_t test_per_task = 500;
  std::size_t clusters = 8;
  // Fraction of input space on which odd tasks contradict even tasks.
  double flip_fraction = 1.0;
  double margin = 0.25;
};

/// Every task labels the same shared inputs with its own hyperplane. Even
/// tasks use w, odd tasks use w rotated by flip_fraction * pi, so with
/// flip_fraction = 1 odd tasks exactly invert the even tasks' labels.
/// Each task alone is linearly separable with margin.
inline TaskSplit build_interference_tasks(const InterferenceOptions& opt, std::uint64_t seed) {
  if (opt.num_tasks < 2) throw ContractError("interference benchmark needs at least two tasks");
  if (opt.dim < 2) throw ContractError("interference benchmark needs dim >= 2");
  Rng rng(seed);
  auto unit = [&](std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
  };
  std::vector<double> w(opt.dim), u(opt.dim);
  for (auto& x : w) x = normal01(rng);
  w = unit(w);
  for (auto& x : u) x = normal01(rng);
  double proj = 0.0;
  for (std::size_t i = 0; i < opt.dim; ++i) proj += u[i] * w[i];
  for (std::size_t i = 0; i < opt.dim; ++i) u[i] -= proj * w[i];
  u = unit(u);
  const double angle = opt.flip_fraction * std::numbers::pi;
  std::vector<std::vector<double>> planes;
  for (std::size_t t = 0; t < opt.num_tasks; ++t) {
    std::vector<double> p(opt.dim);
    for (std::size_t i = 0; i < opt.dim; ++i) p[i] = t % 2 == 0 ? w[i] : std::cos(angle) * w[i] + std::sin(angle) * u[i];
    planes.push_back(std::move(p));
  }
  std::vector<std::vector<double>> centers(opt.clusters, std::vector<double>(opt.dim));
  for (auto& c : centers) {
    for (auto& x : c) x = 2.0 * normal01(rng);
  }
  auto dot = [](const std::vector<double>& a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto make_pool = [&](std::size_t n) {
    std::vector<std::shared_ptr<const Tensor>> pool;
    while (pool.size() < n) {
      const auto& c = centers[uniform_index(rng, centers.size())];
      std::vector<double> x(opt.dim);
      for (std::size_t i = 0; i < opt.dim; ++i) x[i] = c[i] + normal01(rng);
      bool clear = true;
      for (const auto& p : planes) clear = clear && std::abs(dot(p, x)) >= opt.margin;
      if (clear) pool.push_back(std::make_shared<const Tensor>(Tensor::vector(std::move(x))));
    }
    return pool;
  };
  auto label_all = [&](const std::vector<std::shared_ptr<const Tensor>>& pool) {
    std::vector<MtlSample> out;
    for (std::size_t t = 0; t < opt.num_tasks; ++t) {
      for (const auto& x : pool) out.push_back({x, t, dot(planes[t], x->data()) > 0.0 ? 1u : 0u});
    }
    return out;
  };
  TaskSplit split;
  split.classes.assign(opt.num_tasks, 2);
  split.train = label_all(make_pool(opt.samples_per_task));
  split.test = label_all(make_pool(opt.test_per_task));
  return split;
}

/// Epoch order: each task's samples shuffled, then interleaved round-robin.
inline std::vector<std::size_t> epoch_order(const std::vector<MtlSample>& samples, std::size_t num_tasks, Rng& rng) {
  std::vector<std::vector<std::size_t>> per_task(num_tasks);
  for (std::size_t i = 0; i < samples.size(); ++i) per_task.at(samples[i].task).push_back(i);
  for (auto& v : per_task) shuffle(v, rng);
  std::vector<std::size_t> order;
  order.reserve(samples.size());
  for (std::size_t pos = 0; order.size() < samples.size(); ++pos) {
    for (auto& v : per_task) {
      if (pos < v.size()) order.push_back(v[pos]);
    }
  }
  return order;
}

/// Container export using the checkpoint framing: ids 0/1 hold train
/// features [N x d] and (task, label) pairs [N x 2]; ids 2/3 the same for test.
inline std::vector<checkpoint::Entry> split_entries(const TaskSplit& split) {
  auto pack = [](const std::vector<MtlSample>& s, std::uint64_t id) {
    const std::size_t d = s.front().x().size();
    std::vector<double> x, meta;
    for (const auto& m : s) {
      x.insert(x.end(), m.x().data().begin(), m.x().data().end());
      meta.push_back(static_cast<double>(m.task));
      meta.push_back(static_cast<double>(m.label));
    }
    return std::array<checkpoint::Entry, 2>{checkpoint::Entry{id, Tensor({s.size(), d}, std::move(x))},
                                            checkpoint::Entry{id + 1, Tensor({s.size(), 2}, std::move(meta))}};
  };
  if (split.train.empty() || split.test.empty()) throw ContractError("cannot export an empty split");
  auto a = pack(split.train, 0);
  auto b = pack(split.test, 2);
  return {a[0], a[1], b[0], b[1]};
}

inline TaskSplit split_from_entries(std::span<const checkpoint::Entry> entries) {
  if (entries.size() != 4) throw FormatError("split container needs 4 tensors, got " + std::to_string(entries.size()));
  auto unpack = [](const Tensor& x, const Tensor& meta) {
    std::vector<MtlSample> out;
    const std::size_t n = x.dim(0), d = x.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(x.data().begin() + i * d, x.data().begin() + (i + 1) * d);
      out.push_back({std::make_shared<const Tensor>(Tensor::vector(std::move(row))),
                     static_cast<std::size_t>(meta.at(i, 0)), static_cast<std::size_t>(meta.at(i, 1))});
    }
    return out;
  };
  TaskSplit split;
  split.train = unpack(entries[0].value, entries[1].value);
  split.test = unpack(entries[2].value, entries[3].value);
  std::size_t tasks = 0;
  for (const auto& s : split.train) tasks = std::max(tasks, s.task + 1);
  split.classes.assign(tasks, 0);
  for (const auto& s : split.train) split.classes[s.task] = std::max(split.classes[s.task], s.label + 1);
  return split;
}

}  // namespace rnet
