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

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnet/autodiff.hpp"
#include "rnet/blocks.hpp"
#include "rnet/datasets.hpp"
#include "rnet/errors.hpp"

namespace rnet {

/// What a router returns for one state: a position in legal_actions(depth),
/// the probability (or Q value) behind it, and the agent that decided.
struct Decision {
  std::size_t action = 0;
  double score = 1.0;
  std::size_t agent = 0;
  // Probability of every legal action under the deciding policy.
  std::vector<double> distribution;
};

class Router {
 public:
  virtual ~Router() = default;
  /// Called once per input before the first decision.
  virtual void begin(const Tensor& /*x*/, std::size_t /*task*/) {}
  virtual Decision decide(const RoutingState& state, std::span<const Action> legal) = 0;
  /// Agent picked by a dispatcher for the current input, if any.
  virtual std::optional<std::size_t> dispatched() const { return std::nullopt; }
};

/// Replays a fixed action sequence, one position per depth.
class FixedRouter : public Router {
 public:
  explicit FixedRouter(std::vector<std::size_t> actions) : actions_(std::move(actions)) {}

  Decision decide(const RoutingState& state, std::span<const Action> legal) override {
    if (state.i == 0 || state.i > actions_.size()) {
      throw RoutingError("fixed router has no action for depth " + std::to_string(state.i));
    }
    Decision d;
    d.action = actions_[state.i - 1];
    d.distribution.assign(legal.size(), 0.0);
    if (d.action < legal.size()) d.distribution[d.action] = 1.0;
    return d;
  }

 private:
  std::vector<std::size_t> actions_;
};

/// Record of one routed forward pass: states S, actions A, immediate
/// rewards R and the final reward, plus per-step bookkeeping for trainers.
struct Trace {
  std::size_t task = 0;
  std::vector<RoutingState> states;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  double r_final = 0.0;
  Tensor prediction;
  std::vector<std::size_t> agents;
  std::vector<double> scores;
  std::vector<std::vector<double>> distributions;
  std::optional<std::size_t> dispatch;
  Tensor input;

  std::size_t length() const { return actions.size(); }
};

struct RouteResult {
  Var output;
  Trace trace;
};

/// Sequential composition of the router-selected blocks (PASS skips a depth).
/// The input is the representation fed to depth 1.
inline RouteResult route_forward(Var x, std::size_t task, Router& router, const BlockRegistry& registry) {
  if (x.value().rank() != 1 || x.value().size() != registry.input_dim()) {
    throw RoutingError("route input has shape " + shape_string(x.value().shape()) + ", depth 1 expects [" +
                       std::to_string(registry.input_dim()) + "]");
  }
  const std::size_t n = registry.max_depth();
  RouteResult result;
  Trace& trace = result.trace;
  trace.task = task;
  trace.input = x.value();
  trace.rewards.assign(n, 0.0);
  router.begin(x.value(), task);
  trace.dispatch = router.dispatched();
  Var v = x;
  for (std::size_t i = 1; i <= n; ++i) {
    const auto& legal = registry.legal_actions(i - 1);
    RoutingState state{v.value(), task, i};
    Decision d = router.decide(state, legal);
    if (d.action >= legal.size()) {
      throw RoutingError("router chose action " + std::to_string(d.action) + " at depth " + std::to_string(i) +
                         " with only " + std::to_string(legal.size()) + " legal actions");
    }
    const Action& a = legal[d.action];
    trace.states.push_back(std::move(state));
    trace.actions.push_back(d.action);
    trace.agents.push_back(d.agent);
    trace.scores.push_back(d.score);
    trace.distributions.push_back(std::move(d.distribution));
    if (a.is_pass()) continue;
    try {
      v = apply_block(registry, a.layer, a.index, v);
    } catch (const DimensionError& e) {
      throw RoutingError("dimension break at depth " + std::to_string(i) + ", action " + std::to_string(d.action) +
                         ": " + e.what());
    }
  }
  result.output = v;
  trace.prediction = v.value();
  return result;
}

inline std::pair<Tensor, Trace> route_forward(const Tensor& x, std::size_t task, Router& router,
                                              const BlockRegistry& registry) {
  Tape tape;
  auto r = route_forward(tape.constant(x), task, router, registry);
  return {r.output.value(), std::move(r.trace)};
}

/// Re-runs a recorded action sequence through the registry.
inline Tensor replay(const Trace& trace, const BlockRegistry& registry) {
  FixedRouter router(trace.actions);
  return route_forward(trace.input, trace.task, router, registry).first;
}

/// Per-task and mean accuracy. The mean is over tasks, not samples.
struct AccuracyTable {
  std::vector<double> per_task;
  std::vector<std::size_t> counts;
  double mean = 0.0;

  nlohmann::json to_json() const { return {{"per_task", per_task}, {"counts", counts}, {"mean", mean}}; }
};

/// Evaluates a class predictor over samples from `num_tasks` tasks.
inline AccuracyTable evaluate(std::span<const MtlSample> samples, std::size_t num_tasks,
                              const std::function<std::size_t(const MtlSample&)>& predict) {
  AccuracyTable table;
  table.per_task.assign(num_tasks, 0.0);
  table.counts.assign(num_tasks, 0);
  std::vector<std::size_t> correct(num_tasks, 0);
  for (const auto& s : samples) {
    if (s.task >= num_tasks) throw ContractError("sample task " + std::to_string(s.task) + " out of range");
    ++table.counts[s.task];
    if (predict(s) == s.label) ++correct[s.task];
  }
  for (std::size_t t = 0; t < num_tasks; ++t) {
    if (table.counts[t] == 0) throw ContractError("task " + std::to_string(t) + " has no evaluation samples");
    table.per_task[t] = static_cast<double>(correct[t]) / static_cast<double>(table.counts[t]);
    table.mean += table.per_task[t];
  }
  table.mean /= static_cast<double>(num_tasks);
  return table;
}

/// Routed evaluation: argmax of each routed prediction.
inline AccuracyTable evaluate(std::span<const MtlSample> samples, std::size_t num_tasks, Router& router,
                              const BlockRegistry& registry) {
  return evaluate(samples, num_tasks, [&](const MtlSample& s) {
    return argmax(route_forward(s.x(), s.task, router, registry).first.data());
  });
}

/// One JSON line per sample for trace dumps.
inline nlohmann::json trace_record(const Trace& trace, bool correct) {
  return {{"task", trace.task},
          {"actions", trace.actions},
          {"rewards", trace.rewards},
          {"r_final", trace.r_final},
          {"correct", correct}};
}

}  // namespace rnet
