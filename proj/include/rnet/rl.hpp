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

#include <atomic>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "rnet/autodiff.hpp"
#include "rnet/blocks.hpp"
#include "rnet/errors.hpp"
#include "rnet/policies.hpp"
#include "rnet/routing.hpp"

namespace rnet {

enum class CollabKind { avg_probability, avg_times_chosen };
enum class FinalRewardKind { plus_minus_one, negative_loss };

struct RewardConfig {
  double rho = 0.0;
  CollabKind collab_kind = CollabKind::avg_probability;
  double gamma = 1.0;
  FinalRewardKind final_kind = FinalRewardKind::plus_minus_one;

  void validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  }
};

/// Exponential moving averages of how often, and how likely, each block is
/// chosen. PASS is tracked as its own entry.
class BlockUsageHistory {
 public:
  using Key = std::pair<std::size_t, std::size_t>;  // (layer, index)

  explicit BlockUsageHistory(double decay = 0.99) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("usage decay must lie in [0, 1)");
  }

  static Key key_of(const Action& a) {
    return a.is_pass() ? Key{std::numeric_limits<std::size_t>::max(), 0} : Key{a.layer, a.index};
  }

  double statistic(const Action& a, CollabKind kind) const {
    const auto& m = kind == CollabKind::avg_probability ? prob_ : chosen_;
    auto it = m.find(key_of(a));
    return it == m.end() ? 0.0 : it->second;
  }

  /// Folds one routing decision into the averages.
  void record(std::span<const Action> legal, std::span<const double> distribution, std::size_t chosen) {
    for (std::size_t k = 0; k < legal.size(); ++k) {
      const Key key = key_of(legal[k]);
      const double p = k < distribution.size() ? distribution[k] : 0.0;
      prob_[key] = decay_ * prob_[key] + (1.0 - decay_) * p;
      chosen_[key] = decay_ * chosen_[key] + (1.0 - decay_) * (k == chosen ? 1.0 : 0.0);
    }
  }

  void set(const Action& a, CollabKind kind, double value) {
    (kind == CollabKind::avg_probability ? prob_ : chosen_)[key_of(a)] = value;
  }

 private:
  double decay_;
  std::map<Key, double> prob_;
  std::map<Key, double> chosen_;
};

/// Fills trace.r_final from the prediction and each r_i from rho times the
/// chosen block's collaboration statistic, read before that step is recorded.
inline void compute_rewards(Trace& trace, std::size_t y_true, const RewardConfig& config, BlockUsageHistory& history,
                            const BlockRegistry& registry) {
  if (trace.prediction.size() == 0) throw ContractError("trace has no prediction");
  if (config.final_kind == FinalRewardKind::plus_minus_one) {
    trace.r_final = argmax(trace.prediction.data()) == y_true ? 1.0 : -1.0;
  } else {
    trace.r_final = std::log(std::max(trace.prediction[y_true], 1e-300));
  }
  trace.rewards.assign(trace.length(), 0.0);
  for (std::size_t i = 0; i < trace.length(); ++i) {
    const auto& legal = registry.legal_actions(i);
    const Action& a = legal.at(trace.actions[i]);
    trace.rewards[i] = config.rho * history.statistic(a, config.collab_kind);
    history.record(legal, trace.distributions.at(i), trace.actions[i]);
  }
}

/// R_i = r_final + sum_{j>=i} gamma^(j-i) r_j. r_final is not discounted.
inline std::vector<double> compute_returns(const Trace& trace, double gamma) {
  const std::size_t n = trace.rewards.size();
  std::vector<double> out(n);
  double tail = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    tail = trace.rewards[i] + gamma * tail;
    out[i] = trace.r_final + tail;
  }
  return out;
}

namespace rl_detail {
inline std::atomic<std::uint64_t> projection_fallbacks{0};
}  // namespace rl_detail

/// Number of projections that fell back to uniform in this process.
inline std::uint64_t projection_fallback_count() { return rl_detail::projection_fallbacks.load(); }

/// clip(x) / sum(clip(x)) with clip to [0, 1]; uniform if nothing survives.
/// Fallbacks are logged on the 1st, 10th, 100th, ... occurrence.
inline std::vector<double> simplex_projection(std::span<const double> raw) {
  if (raw.empty()) throw ContractError("simplex projection of an empty vector");
  std::vector<double> p(raw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    p[i] = std::clamp(raw[i], 0.0, 1.0);
    total += p[i];
  }
  if (!(total > 0.0)) {
    const std::uint64_t n = ++rl_detail::projection_fallbacks;
    std::uint64_t mark = 1;
    while (mark * 10 <= n) mark *= 10;
    if (n == mark) {
      std::clog << "rnet: simplex projection had no positive mass; falling back to uniform (" << n << " so far)\n";
    }
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

inline void project_in_place(std::span<double> row) {
  auto p = simplex_projection(row);
  std::copy(p.begin(), p.end(), row.begin());
}

// ---------------------------------------------------------------------------
// Weighted Policy Learner
// ---------------------------------------------------------------------------

/// Which factor scales a positive gradient. `standard` scales positive
/// differences by 1 - pi(a) and negative ones by pi(a); `swapped` swaps them.
enum class WplVariant { standard, swapped };

/// Granularity of the historical average return. `per_action` keeps one
/// average per (agent, depth, action); `per_depth` shares it across the actions
/// of a depth, so the difference acts as an advantage over the agent's value.
enum class WplBaseline { per_action, per_depth };

/// Historical average return per (agent, depth, action), starting at zero.
class WplState {
 public:
  double& average(std::size_t agent, std::size_t depth, std::size_t action, std::size_t width) {
    auto& agents = table_;
    if (agents.size() <= agent) agents.resize(agent + 1);
    auto& depths = agents[agent];
    if (depths.size() <= depth) depths.resize(depth + 1);
    auto& row = depths[depth];
    if (row.size() < width) row.resize(width, 0.0);
    return row.at(action);
  }

 private:
  std::vector<std::vector<std::vector<double>>> table_;
};

struct WplConfig {
  double lambda_pi = 0.05;
  double gamma = 1.0;
  WplVariant variant = WplVariant::standard;
  WplBaseline baseline = WplBaseline::per_action;
};

/// WPL update for the steps of `trace` decided by `agent`.
inline void wpl_update(const Trace& trace, Policy& policy, std::size_t agent, WplState& state, const WplConfig& config) {
  auto* table = std::get_if<TabularPolicy>(&policy);
  if (!table || table->mode() != PolicyMode::policy_gradient) {
    throw ContractError("WPL is defined only for tabular policy-gradient policies");
  }
  const auto returns = compute_returns(trace, config.gamma);
  for (std::size_t i = 0; i < trace.length(); ++i) {
    if (trace.agents.at(i) != agent) continue;
    auto row = table->row(i);
    const std::size_t a = trace.actions[i];
    const bool shared = config.baseline == WplBaseline::per_depth;
    double& avg = state.average(agent, i, shared ? 0 : a, shared ? 1 : row.size());
    avg = (1.0 - config.lambda_pi) * avg + config.lambda_pi * returns[i];
    double delta = returns[i] - avg;
    const bool damp_with_complement = config.variant == WplVariant::standard ? delta > 0.0 : delta < 0.0;
    delta *= damp_with_complement ? (1.0 - row[a]) : row[a];
    row[a] += config.lambda_pi * delta;
    project_in_place(row);
  }
}

// ---------------------------------------------------------------------------
// REINFORCE
// ---------------------------------------------------------------------------

struct ReinforceConfig {
  double lambda_pi = 0.05;  // tabular step
  double learning_rate = 0.01;  // approximator step
  double gamma = 1.0;
  bool baseline = false;
  double baseline_decay = 0.99;
};

/// Running-average return baseline, used only when enabled.
struct ReturnBaseline {
  double value = 0.0;
  void update(double r, double decay) { value = decay * value + (1.0 - decay) * r; }
};

inline void sgd_apply(std::span<Parameter* const> params, double lr) {
  for (Parameter* p : params) {
    if (!p->touched) continue;
    auto v = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p->zero_grad();
  }
}

/// Ascends lambda * R_i * grad log pi(a_i | s_i) for the steps decided by `agent`.
/// Tabular rows get pi(a) += lambda R / pi(a) followed by simplex projection.
inline void reinforce_update(const Trace& trace, Policy& policy, std::size_t agent, const ReinforceConfig& config,
                             ReturnBaseline* baseline = nullptr) {
  if (mode_of(policy) != PolicyMode::policy_gradient) throw ContractError("REINFORCE needs a policy-gradient policy");
  auto returns = compute_returns(trace, config.gamma);
  const double b = (config.baseline && baseline) ? baseline->value : 0.0;
  if (auto* table = std::get_if<TabularPolicy>(&policy)) {
    for (std::size_t i = 0; i < trace.length(); ++i) {
      if (trace.agents.at(i) != agent) continue;
      auto row = table->row(i);
      const std::size_t a = trace.actions[i];
      const double adv = returns[i] - b;
      if (adv == 0.0) continue;
      row[a] += config.lambda_pi * adv / std::max(row[a], 1e-12);
      project_in_place(row);
    }
  } else {
    auto& approx = std::get<ApproxPolicy>(policy);
    Tape tape;
    std::vector<Var> terms;
    for (std::size_t i = 0; i < trace.length(); ++i) {
      if (trace.agents.at(i) != agent) continue;
      const double adv = returns[i] - b;
      if (adv == 0.0) continue;
      Var logp = ad::pick(ad::log_softmax(approx.outputs(tape, i, trace.states[i].v, trace.states[i].t)), trace.actions[i]);
      terms.push_back(ad::scale(logp, -adv));
    }
    if (!terms.empty()) {
      Var loss = terms.front();
      for (std::size_t k = 1; k < terms.size(); ++k) loss = ad::add(loss, terms[k]);
      tape.backward(loss);
      sgd_apply(approx.parameters(), config.learning_rate);
    }
  }
  if (baseline && config.baseline && !returns.empty()) baseline->update(returns.front(), config.baseline_decay);
}

/// Dispatcher update: REINFORCE on the final reward for the agent it picked.
inline void reinforce_dispatcher(const Trace& trace, ApproxPolicy& dispatcher, const ReinforceConfig& config,
                                 ReturnBaseline* baseline = nullptr) {
  if (!trace.dispatch) throw ContractError("trace has no dispatcher decision");
  const double b = (config.baseline && baseline) ? baseline->value : 0.0;
  const double adv = trace.r_final - b;
  if (baseline && config.baseline) baseline->update(trace.r_final, config.baseline_decay);
  if (adv == 0.0) return;
  Tape tape;
  Var logp = ad::pick(ad::log_softmax(dispatcher.outputs(tape, 0, trace.input, trace.task)), *trace.dispatch);
  tape.backward(ad::scale(logp, -adv));
  sgd_apply(dispatcher.parameters(), config.learning_rate);
}

// ---------------------------------------------------------------------------
// Q-learning
// ---------------------------------------------------------------------------

struct QConfig {
  double alpha = 0.1;          // tabular step
  double learning_rate = 0.01; // approximator step
  double gamma = 1.0;
};

/// One-step Q targets along the trace; the last step's target is r_n + r_final.
inline void q_tabular_update(const Trace& trace, Policy& policy, std::size_t agent, const QConfig& config) {
  auto* table = std::get_if<TabularPolicy>(&policy);
  if (!table || table->mode() != PolicyMode::q_values) throw ContractError("tabular Q update needs a tabular Q policy");
  const std::size_t n = trace.length();
  for (std::size_t i = 0; i < n; ++i) {
    if (trace.agents.at(i) != agent) continue;
    double target = trace.rewards[i];
    if (i + 1 < n) {
      auto next = table->row(i + 1);
      target += config.gamma * *std::max_element(next.begin(), next.end());
    } else {
      target += trace.r_final;
    }
    double& q = table->row(i)[trace.actions[i]];
    q += config.alpha * (target - q);
  }
}

/// One SGD step on the squared TD error per trace step. No target network.
inline void q_approx_update(const Trace& trace, Policy& policy, std::size_t agent, const QConfig& config) {
  auto* approx = std::get_if<ApproxPolicy>(&policy);
  if (!approx || approx->mode() != PolicyMode::q_values) throw ContractError("approximate Q update needs a Q approximator");
  const std::size_t n = trace.length();
  for (std::size_t i = 0; i < n; ++i) {
    if (trace.agents.at(i) != agent) continue;
    double target = trace.rewards[i];
    if (i + 1 < n) {
      auto next = approx->evaluate(i + 1, trace.states[i + 1].v, trace.states[i + 1].t);
      target += config.gamma * *std::max_element(next.begin(), next.end());
    } else {
      target += trace.r_final;
    }
    Tape tape;
    Var q = ad::pick(approx->outputs(tape, i, trace.states[i].v, trace.states[i].t), trace.actions[i]);
    Var err = ad::sub(q, tape.constant(Tensor::vector({target})));
    tape.backward(ad::square(err));
    sgd_apply(approx->parameters(i), config.learning_rate);
  }
}

}  // namespace rnet
