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
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rnet/autodiff.hpp"
#include "rnet/blocks.hpp"
#include "rnet/datasets.hpp"
#include "rnet/errors.hpp"
#include "rnet/params.hpp"
#include "rnet/routing.hpp"

namespace rnet {

/// Policy-gradient policies hold probabilities; Q policies hold action values.
enum class PolicyMode { policy_gradient, q_values };

/// One row per depth, one column per legal action at that depth.
class TabularPolicy {
 public:
  TabularPolicy(PolicyMode mode, std::span<const std::size_t> actions_per_depth, std::uint64_t first_id = 0)
      : mode_(mode), first_id_(first_id) {
    for (std::size_t a : actions_per_depth) {
      if (a == 0) throw ContractError("tabular policy row with no actions");
      rows_.push_back(mode == PolicyMode::policy_gradient ? Tensor::filled({a}, 1.0 / static_cast<double>(a))
                                                          : Tensor({a}));
    }
  }

  PolicyMode mode() const { return mode_; }
  std::size_t depths() const { return rows_.size(); }
  std::span<double> row(std::size_t depth) { return rows_.at(depth).data(); }
  std::span<const double> row(std::size_t depth) const { return rows_.at(depth).data(); }

  std::vector<std::pair<std::uint64_t, Tensor*>> tensors() {
    std::vector<std::pair<std::uint64_t, Tensor*>> out;
    for (std::size_t d = 0; d < rows_.size(); ++d) out.emplace_back(first_id_ + d, &rows_[d]);
    return out;
  }
  std::uint64_t next_id() const { return first_id_ + rows_.size(); }

 private:
  PolicyMode mode_;
  std::uint64_t first_id_;
  std::vector<Tensor> rows_;
};

/// One two-layer perceptron per depth over concat(v, one_hot(t)).
class ApproxPolicy {
 public:
  struct Net {
    Parameter* w1 = nullptr;
    Parameter* b1 = nullptr;
    Parameter* w2 = nullptr;
    Parameter* b2 = nullptr;
    std::size_t in_dim = 0;
  };

  ApproxPolicy(PolicyMode mode, std::span<const std::size_t> input_dims, std::span<const std::size_t> actions_per_depth,
               std::size_t num_tasks, Rng& rng, std::size_t hidden = 64, std::uint64_t first_id = 0)
      : mode_(mode), num_tasks_(num_tasks), store_(first_id) {
    if (input_dims.size() != actions_per_depth.size()) throw DimensionError("approx policy: depth count mismatch");
    for (std::size_t d = 0; d < input_dims.size(); ++d) {
      Net net;
      net.in_dim = input_dims[d] + num_tasks;
      net.w1 = &store_.create(glorot_uniform(hidden, net.in_dim, rng));
      net.b1 = &store_.create(Tensor({hidden}));
      net.w2 = &store_.create(glorot_uniform(actions_per_depth[d], hidden, rng));
      net.b2 = &store_.create(Tensor({actions_per_depth[d]}));
      nets_.push_back(net);
    }
  }

  ApproxPolicy(ApproxPolicy&&) = default;
  ApproxPolicy& operator=(ApproxPolicy&&) = default;

  PolicyMode mode() const { return mode_; }
  std::size_t depths() const { return nets_.size(); }
  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t num_actions(std::size_t depth) const { return nets_.at(depth).b2->value.size(); }

  Tensor encode(const Tensor& v, std::size_t task) const {
    if (task >= num_tasks_) throw ContractError("task " + std::to_string(task) + " outside one-hot width");
    std::vector<double> x(v.data().begin(), v.data().end());
    x.resize(x.size() + num_tasks_, 0.0);
    x[v.size() + task] = 1.0;
    return Tensor::vector(std::move(x));
  }

  /// Raw head outputs: logits in PG mode, Q values in Q mode.
  Var outputs(Tape& tape, std::size_t depth, const Tensor& v, std::size_t task) const {
    const Net& net = nets_.at(depth);
    Tensor x = encode(v, task);
    if (x.size() != net.in_dim) {
      throw DimensionError("approx policy depth " + std::to_string(depth) + " expects v of width " +
                           std::to_string(net.in_dim - num_tasks_) + ", got " + std::to_string(v.size()));
    }
    Var h = ad::relu(ad::linear(tape.constant(std::move(x)), tape.param(*net.w1), tape.param(*net.b1)));
    return ad::linear(h, tape.param(*net.w2), tape.param(*net.b2));
  }

  /// Probabilities (PG) or Q values (Q) at one state.
  std::vector<double> evaluate(std::size_t depth, const Tensor& v, std::size_t task) const {
    Tape tape;
    Var out = outputs(tape, depth, v, task);
    if (mode_ == PolicyMode::q_values) return out.value().values();
    return ad::softmax_values(out.value().data()).values();
  }

  std::vector<Parameter*> parameters() { return store_.all(); }
  std::vector<Parameter*> parameters(std::size_t depth) {
    const Net& n = nets_.at(depth);
    return {n.w1, n.b1, n.w2, n.b2};
  }
  std::uint64_t next_id() const { return store_.next_id(); }

 private:
  PolicyMode mode_;
  std::size_t num_tasks_;
  ParameterStore store_;
  std::vector<Net> nets_;
};

using Policy = std::variant<TabularPolicy, ApproxPolicy>;

inline PolicyMode mode_of(const Policy& p) {
  return std::visit([](const auto& x) { return x.mode(); }, p);
}

enum class PolicyKind { tabular_pg, tabular_q, approx_pg, approx_q };

struct PolicyDims {
  std::vector<std::size_t> actions_per_depth;
  std::vector<std::size_t> input_dims;  // approximators only
  std::size_t num_tasks = 1;
  std::size_t hidden = 64;
};

/// Tabular PG rows start uniform, tabular Q rows at zero, approximators seeded.
inline Policy init_policy(PolicyKind kind, const PolicyDims& dims, std::uint64_t seed, std::uint64_t first_id = 0) {
  switch (kind) {
    case PolicyKind::tabular_pg:
      return TabularPolicy(PolicyMode::policy_gradient, dims.actions_per_depth, first_id);
    case PolicyKind::tabular_q:
      return TabularPolicy(PolicyMode::q_values, dims.actions_per_depth, first_id);
    case PolicyKind::approx_pg:
    case PolicyKind::approx_q: {
      Rng rng(seed);
      return ApproxPolicy(kind == PolicyKind::approx_pg ? PolicyMode::policy_gradient : PolicyMode::q_values,
                          dims.input_dims, dims.actions_per_depth, dims.num_tasks, rng, dims.hidden, first_id);
    }
  }
  throw ContractError("unknown policy kind");
}

enum class AgentMode { single, per_task, dispatched };

/// The router's agents: one shared agent, one per task indexed by task id,
/// or one per task chosen by a learned dispatcher.
struct AgentSet {
  AgentMode mode = AgentMode::per_task;
  std::vector<Policy> agents;
  std::optional<ApproxPolicy> dispatcher;

  void validate(std::size_t num_tasks) const {
    switch (mode) {
      case AgentMode::single:
        if (agents.size() != 1) throw ConfigError("single-agent router needs exactly one agent");
        break;
      case AgentMode::per_task:
        if (agents.size() != num_tasks) throw ConfigError("per-task router needs one agent per task");
        break;
      case AgentMode::dispatched:
        if (!dispatcher || agents.size() != num_tasks) {
          throw ConfigError("dispatched router needs a dispatcher and one agent per task");
        }
        break;
    }
  }
};

enum class SelectMode { sample, greedy };

struct Selection {
  std::size_t action = 0;
  double score = 0.0;
  std::size_t agent = 0;
  std::vector<double> distribution;
};

namespace policy_detail {

inline std::size_t sample_from(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += std::max(p, 0.0);
  if (!(total > 0.0)) return uniform_index(rng, probs.size());
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    u -= std::max(probs[i], 0.0);
    if (u < 0.0) return i;
  }
  // rounding left u >= 0: last action with mass
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

inline std::vector<double> normalized(std::span<const double> probs) {
  std::vector<double> p(probs.begin(), probs.end());
  double total = 0.0;
  for (auto& v : p) total += (v = std::max(v, 0.0));
  if (!(total > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  } else {
    for (auto& v : p) v /= total;
  }
  return p;
}

}  // namespace policy_detail

/// Dispatcher choice for an input. Greedy mode takes the argmax.
inline std::size_t dispatch_agent(const AgentSet& set, const Tensor& x, std::size_t task, SelectMode mode, Rng* rng) {
  if (!set.dispatcher) throw ContractError("agent set has no dispatcher");
  auto probs = set.dispatcher->evaluate(0, x, task);
  if (mode == SelectMode::greedy) return argmax(probs);
  if (!rng) throw ContractError("sampling requires a random generator");
  return policy_detail::sample_from(probs, *rng);
}

/// Picks the deciding agent and an action for `state`.
/// `assigned` carries the dispatcher's pick in dispatched mode.
inline Selection select_action(const AgentSet& set, const RoutingState& state, std::size_t num_legal, SelectMode mode,
                               Rng* rng, double epsilon = 0.0, std::optional<std::size_t> assigned = std::nullopt) {
  if (num_legal == 0) throw ContractError("no legal actions at depth " + std::to_string(state.i));
  Selection sel;
  switch (set.mode) {
    case AgentMode::single:
      sel.agent = 0;
      break;
    case AgentMode::per_task:
      sel.agent = state.t;
      break;
    case AgentMode::dispatched:
      sel.agent = assigned ? *assigned : dispatch_agent(set, state.v, state.t, mode, rng);
      break;
  }
  if (sel.agent >= set.agents.size()) throw ContractError("no agent " + std::to_string(sel.agent));
  const Policy& policy = set.agents[sel.agent];
  const std::size_t depth = state.i - 1;
  std::vector<double> values = std::visit(
      [&](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TabularPolicy>) {
          auto r = p.row(depth);
          return {r.begin(), r.end()};
        } else {
          return p.evaluate(depth, state.v, state.t);
        }
      },
      policy);
  if (values.size() != num_legal) {
    throw DimensionError("agent " + std::to_string(sel.agent) + " has " + std::to_string(values.size()) +
                         " actions at depth " + std::to_string(state.i) + ", registry offers " +
                         std::to_string(num_legal));
  }
  if (mode_of(policy) == PolicyMode::policy_gradient) {
    sel.distribution = policy_detail::normalized(values);
    if (mode == SelectMode::greedy) {
      sel.action = argmax(sel.distribution);
    } else {
      if (!rng) throw ContractError("sampling requires a random generator");
      sel.action = policy_detail::sample_from(sel.distribution, *rng);
    }
    sel.score = sel.distribution[sel.action];
  } else {
    const std::size_t best = argmax(values);
    const double eps = mode == SelectMode::greedy ? 0.0 : epsilon;
    sel.distribution.assign(values.size(), eps / static_cast<double>(values.size()));
    sel.distribution[best] += 1.0 - eps;
    sel.action = best;
    if (eps > 0.0) {
      if (!rng) throw ContractError("sampling requires a random generator");
      if (uniform01(*rng) < eps) sel.action = uniform_index(*rng, values.size());
    }
    sel.score = values[sel.action];
  }
  return sel;
}

/// Router backed by an agent set.
class AgentRouter : public Router {
 public:
  AgentRouter(const AgentSet& set, SelectMode mode, Rng* rng, double epsilon = 0.0)
      : set_(set), mode_(mode), rng_(rng), epsilon_(epsilon) {}

  void begin(const Tensor& x, std::size_t task) override {
    assigned_.reset();
    if (set_.mode == AgentMode::dispatched) assigned_ = dispatch_agent(set_, x, task, mode_, rng_);
  }

  Decision decide(const RoutingState& state, std::span<const Action> legal) override {
    Selection s = select_action(set_, state, legal.size(), mode_, rng_, epsilon_, assigned_);
    return Decision{s.action, s.score, s.agent, std::move(s.distribution)};
  }

  std::optional<std::size_t> dispatched() const override { return assigned_; }

 private:
  const AgentSet& set_;
  SelectMode mode_;
  Rng* rng_;
  double epsilon_;
  std::optional<std::size_t> assigned_;
};

/// [agent][depth][action] probabilities. Q agents export the one-hot greedy
/// choice. Approximators are probed at a zero representation with their own
/// task index (task 0 for a single agent).
using PolicySnapshot = std::vector<std::vector<std::vector<double>>>;

inline PolicySnapshot policy_snapshot(const AgentSet& set, std::span<const std::size_t> input_dims = {}) {
  PolicySnapshot snap;
  for (std::size_t a = 0; a < set.agents.size(); ++a) {
    std::vector<std::vector<double>> rows;
    std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          for (std::size_t d = 0; d < p.depths(); ++d) {
            std::vector<double> r;
            if constexpr (std::is_same_v<P, TabularPolicy>) {
              auto row = p.row(d);
              r.assign(row.begin(), row.end());
            } else {
              if (d >= input_dims.size()) throw ContractError("approximator snapshot needs per-depth input widths");
              const std::size_t task = set.mode == AgentMode::single ? 0 : std::min(a, p.num_tasks() - 1);
              r = p.evaluate(d, Tensor({input_dims[d]}), task);
            }
            if (p.mode() == PolicyMode::q_values) {
              const std::size_t best = argmax(r);
              std::fill(r.begin(), r.end(), 0.0);
              r[best] = 1.0;
            }
            rows.push_back(std::move(r));
          }
        },
        set.agents[a]);
    snap.push_back(std::move(rows));
  }
  return snap;
}

inline void write_snapshot_csv(std::ostream& os, const PolicySnapshot& snap, bool header = true) {
  if (header) os << "agent,depth,action,probability\n";
  for (std::size_t a = 0; a < snap.size(); ++a) {
    for (std::size_t d = 0; d < snap[a].size(); ++d) {
      for (std::size_t k = 0; k < snap[a][d].size(); ++k) os << a << ',' << d << ',' << k << ',' << snap[a][d][k] << '\n';
    }
  }
}

}  // namespace rnet
