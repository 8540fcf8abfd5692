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

#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <vector>

#include "json.hpp"
#include "rnet/model.hpp"
#include "rnet/policies.hpp"

namespace rnet {

/// Policy snapshots taken every `every` training samples, starting at 0.
class PolicyTimeline {
 public:
  struct Entry {
    std::size_t sample_count = 0;
    PolicySnapshot snapshot;
  };

  explicit PolicyTimeline(std::size_t every = 100) : every_(every) {
    if (every == 0) throw ContractError("timeline cadence must be positive");
  }

  /// Call before processing training sample number `sample_count`.
  void maybe_record(std::size_t sample_count, const RoutedModel& model) {
    if (sample_count % every_ != 0) return;
    record(sample_count, policy_snapshot(model.agents(), model.depth_input_dims()));
  }

  void record(std::size_t sample_count, PolicySnapshot snapshot) {
    if (!entries_.empty() && sample_count <= entries_.back().sample_count) {
      throw ContractError("timeline sample counts must increase");
    }
    entries_.push_back({sample_count, std::move(snapshot)});
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t every() const { return every_; }

  void write_csv(std::ostream& os) const {
    os << "sample_count,task,depth,action,probability\n";
    for (const auto& e : entries_) {
      for (std::size_t a = 0; a < e.snapshot.size(); ++a) {
        for (std::size_t d = 0; d < e.snapshot[a].size(); ++d) {
          for (std::size_t k = 0; k < e.snapshot[a][d].size(); ++k) {
            os << e.sample_count << ',' << a << ',' << d << ',' << k << ',' << e.snapshot[a][d][k] << '\n';
          }
        }
      }
    }
  }

 private:
  std::size_t every_;
  std::vector<Entry> entries_;
};

/// Shannon entropy in bits.
inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

/// A block as seen by the router: 0-based depth and action position.
struct BlockId {
  std::size_t depth = 0;
  std::size_t action = 0;
};

/// Probability each agent assigns to one block over the timeline.
inline std::vector<std::vector<double>> block_adoption_curve(const PolicyTimeline& timeline, BlockId block) {
  if (timeline.size() == 0) return {};
  const auto& first = timeline.entries().front().snapshot;
  if (first.empty() || block.depth >= first.front().size() || block.action >= first.front()[block.depth].size()) {
    throw LookupError("no block at depth " + std::to_string(block.depth) + ", action " + std::to_string(block.action));
  }
  std::vector<std::vector<double>> series(first.size());
  for (const auto& e : timeline.entries()) {
    for (std::size_t a = 0; a < e.snapshot.size(); ++a) series[a].push_back(e.snapshot[a][block.depth][block.action]);
  }
  return series;
}

/// Converged routing: the most frequent greedy path per task, which tasks use
/// each block, and how many distinct blocks each depth uses.
struct RoutingMap {
  static constexpr long kPass = -1;

  std::vector<std::vector<long>> paths;                       // per task, one entry per depth
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>> users;  // (layer, index) -> tasks
  std::vector<std::size_t> distinct_per_depth;

  nlohmann::json to_json() const {
    nlohmann::json tasks = nlohmann::json::array();
    for (std::size_t t = 0; t < paths.size(); ++t) tasks.push_back({{"task", t}, {"path", paths[t]}});
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& [key, ts] : users) {
      blocks.push_back({{"layer", key.first}, {"index", key.second}, {"tasks", std::vector<std::size_t>(ts.begin(), ts.end())}});
    }
    return {{"tasks", tasks}, {"distinct_per_depth", distinct_per_depth}, {"blocks", blocks}};
  }
};

/// Greedy routing map. Path entries are action positions within each
/// depth's legal set, with PASS written as -1.
inline RoutingMap export_routing_map(const RoutedModel& model, std::span<const MtlSample> samples, std::size_t num_tasks) {
  const auto& reg = model.registry();
  const std::size_t n = reg.max_depth();
  std::vector<std::map<std::vector<std::size_t>, std::size_t>> counts(num_tasks);
  for (const auto& s : samples) {
    if (s.task >= num_tasks) throw ContractError("sample task out of range");
    ++counts[s.task][model.greedy_trace(s.x(), s.task).actions];
  }
  RoutingMap map;
  std::vector<std::set<std::pair<std::size_t, std::size_t>>> per_depth(n);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    std::vector<long> path;
    if (!counts[t].empty()) {
      auto best = counts[t].begin();
      for (auto it = counts[t].begin(); it != counts[t].end(); ++it) {
        if (it->second > best->second) best = it;
      }
      for (std::size_t d = 0; d < n; ++d) {
        const Action& a = reg.legal_actions(d).at(best->first[d]);
        if (a.is_pass()) {
          path.push_back(RoutingMap::kPass);
          continue;
        }
        path.push_back(static_cast<long>(best->first[d]));
        map.users[{a.layer, a.index}].insert(t);
        per_depth[d].insert({a.layer, a.index});
      }
    }
    map.paths.push_back(std::move(path));
  }
  for (const auto& s : per_depth) map.distinct_per_depth.push_back(s.size());
  return map;
}

}  // namespace rnet
