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
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rnet/autodiff.hpp"
#include "rnet/blocks.hpp"
#include "rnet/datasets.hpp"
#include "rnet/params.hpp"
#include "rnet/policies.hpp"
#include "rnet/rl.hpp"
#include "rnet/routing.hpp"

namespace rnet {

struct TrainContext {
  std::size_t epoch = 0;
  double progress = 0.0;  // fraction of training completed, in [0, 1]
};

struct StepMetrics {
  std::size_t task = 0;
  double loss = 0.0;
  bool correct = false;
  double r_final = 0.0;
  std::vector<std::size_t> actions;
};

/// Common surface of the routed model and the baselines.
class MultiTaskModel {
 public:
  virtual ~MultiTaskModel() = default;

  /// Forward, backward into block gradients, and any router update.
  virtual StepMetrics train_sample(const MtlSample& sample, const TrainContext& ctx) = 0;
  /// Class probabilities under greedy (deterministic) inference.
  virtual Tensor predict(const Tensor& x, std::size_t task) const = 0;
  /// Parameters trained by SGD.
  virtual std::vector<Parameter*> parameters() = 0;
  /// Every tensor needed to restore the model, by stable id.
  virtual std::vector<std::pair<std::uint64_t, Tensor*>> state_tensors() = 0;

  std::vector<checkpoint::Entry> checkpoint_entries() {
    std::vector<checkpoint::Entry> out;
    for (auto& [id, t] : state_tensors()) out.push_back({id, *t});
    return out;
  }

  void restore(std::span<const checkpoint::Entry> entries) {
    std::map<std::uint64_t, Tensor*> targets;
    for (auto& [id, t] : state_tensors()) targets[id] = t;
    checkpoint::restore(entries, targets);
  }
};

/// Forward/backward for one sample followed by an SGD step on the touched
/// parameters.
inline StepMetrics train_step(MultiTaskModel& model, const MtlSample& sample, const SgdConfig& sgd,
                              const TrainContext& ctx) {
  StepMetrics m = model.train_sample(sample, ctx);
  auto params = model.parameters();
  sgd_step(params, sgd, ctx.epoch);
  return m;
}

inline AccuracyTable evaluate(const MultiTaskModel& model, std::span<const MtlSample> samples, std::size_t num_tasks) {
  return evaluate(samples, num_tasks, [&](const MtlSample& s) { return argmax(model.predict(s.x(), s.task).data()); });
}

/// Representation fed to the first routed layer: the raw input, or a shared
/// trainable affine+ReLU map.
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::size_t in_dim, std::size_t out_dim, Rng& rng, std::uint64_t first_id = 0)
      : store_(std::make_unique<ParameterStore>(first_id)) {
    w_ = &store_->create(glorot_uniform(out_dim, in_dim, rng));
    b_ = &store_->create(Tensor({out_dim}));
  }

  static Encoder identity(std::uint64_t first_id = 0) {
    Encoder e;
    e.store_ = std::make_unique<ParameterStore>(first_id);
    return e;
  }

  bool trainable() const { return w_ != nullptr; }

  Var apply(Tape& tape, const Tensor& x) const {
    Var v = tape.constant(x);
    if (!w_) return v;
    return ad::relu(ad::linear(v, tape.param(*w_), tape.param(*b_)));
  }

  std::size_t output_dim(std::size_t in_dim) const { return w_ ? w_->value.dim(0) : in_dim; }
  std::vector<Parameter*> parameters() const {
    if (!w_) return {};
    return {w_, b_};
  }
  std::uint64_t next_id() const { return store_ ? store_->next_id() : 0; }

 private:
  std::unique_ptr<ParameterStore> store_;
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

enum class RlAlgorithm { wpl, reinforce, q_tabular, q_approx };

struct RoutedModelConfig {
  std::size_t input_dim = 0;
  std::size_t num_tasks = 1;
  std::size_t encoder_dim = 0;  // 0: raw input feeds the router
  RegistryConfig registry;
  AgentMode agent_mode = AgentMode::per_task;
  PolicyKind policy_kind = PolicyKind::tabular_pg;
  RlAlgorithm rl = RlAlgorithm::wpl;
  RewardConfig reward;
  WplConfig wpl;
  ReinforceConfig reinforce;
  QConfig q;
  double usage_decay = 0.99;
  // epsilon-greedy schedule for Q agents: linear from start to end over the
  // first `epsilon_fraction` of training
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.25;
  std::size_t approx_hidden = 64;
};

/// Router plus function blocks trained jointly: blocks by backprop along the
/// selected route, router agents by the configured RL rule on the trace.
class RoutedModel : public MultiTaskModel {
 public:
  RoutedModel(const RoutedModelConfig& config, std::uint64_t seed)
      : config_(config), init_rng_(seed), sample_rng_(seed ^ 0x9e3779b97f4a7c15ULL), history_(config.usage_decay) {
    config_.reward.validate();
    encoder_ = config.encoder_dim ? Encoder(config.input_dim, config.encoder_dim, init_rng_, 0) : Encoder::identity(0);
    registry_ = std::make_unique<BlockRegistry>(config_.registry, init_rng_, encoder_.next_id());
    if (registry_->input_dim() != encoder_.output_dim(config.input_dim)) {
      throw DimensionError("routed layers take " + std::to_string(registry_->input_dim()) + " inputs, encoder gives " +
                           std::to_string(encoder_.output_dim(config.input_dim)));
    }
    build_agents();
  }

  const BlockRegistry& registry() const { return *registry_; }
  BlockRegistry& registry() { return *registry_; }
  const AgentSet& agents() const { return agents_; }
  AgentSet& agents() { return agents_; }
  const Encoder& encoder() const { return encoder_; }
  const RoutedModelConfig& config() const { return config_; }
  BlockUsageHistory& usage_history() { return history_; }

  /// Representation width entering each depth.
  std::vector<std::size_t> depth_input_dims() const {
    std::vector<std::size_t> dims;
    for (std::size_t d = 0; d < registry_->num_layers(); ++d) dims.push_back(registry_->config().layers[d].in_dim);
    return dims;
  }

  double epsilon(double progress) const {
    if (config_.epsilon_fraction <= 0.0 || progress >= config_.epsilon_fraction) return config_.epsilon_end;
    const double f = progress / config_.epsilon_fraction;
    return config_.epsilon_start + f * (config_.epsilon_end - config_.epsilon_start);
  }

  /// Routed forward with sampled actions; returns the trace with rewards.
  Trace train_trace(const MtlSample& sample, const TrainContext& ctx, double* loss_out = nullptr) {
    Tape tape;
    Var x = encoder_.apply(tape, sample.x());
    AgentRouter router(agents_, SelectMode::sample, &sample_rng_, epsilon(ctx.progress));
    RouteResult r = route_forward(x, sample.task, router, *registry_);
    Var loss = ad::nll(r.output, sample.label);
    if (loss_out) *loss_out = loss.value()[0];
    tape.backward(loss);
    compute_rewards(r.trace, sample.label, config_.reward, history_, *registry_);
    return std::move(r.trace);
  }

  StepMetrics train_sample(const MtlSample& sample, const TrainContext& ctx) override {
    StepMetrics m;
    Trace trace = train_trace(sample, ctx, &m.loss);
    update_router(trace);
    m.task = sample.task;
    m.correct = argmax(trace.prediction.data()) == sample.label;
    m.r_final = trace.r_final;
    m.actions = trace.actions;
    last_trace_ = std::move(trace);
    return m;
  }

  void update_router(const Trace& trace) {
    std::set<std::size_t> deciders(trace.agents.begin(), trace.agents.end());
    for (std::size_t agent : deciders) {
      Policy& p = agents_.agents.at(agent);
      switch (config_.rl) {
        case RlAlgorithm::wpl:
          wpl_update(trace, p, agent, wpl_state_, config_.wpl);
          break;
        case RlAlgorithm::reinforce:
          reinforce_update(trace, p, agent, config_.reinforce, &baselines_[agent]);
          break;
        case RlAlgorithm::q_tabular:
          q_tabular_update(trace, p, agent, config_.q);
          break;
        case RlAlgorithm::q_approx:
          q_approx_update(trace, p, agent, config_.q);
          break;
      }
    }
    if (agents_.dispatcher) reinforce_dispatcher(trace, *agents_.dispatcher, config_.reinforce, &dispatch_baseline_);
  }

  /// Greedy route for one input.
  Trace greedy_trace(const Tensor& x, std::size_t task) const {
    Tape tape;
    Var v = encoder_.apply(tape, x);
    AgentRouter router(agents_, SelectMode::greedy, nullptr);
    return route_forward(v, task, router, *registry_).trace;
  }

  Tensor predict(const Tensor& x, std::size_t task) const override { return greedy_trace(x, task).prediction; }

  std::vector<Parameter*> parameters() override {
    auto out = encoder_.parameters();
    auto reg = registry_->parameters();
    out.insert(out.end(), reg.begin(), reg.end());
    return out;
  }

  std::vector<std::pair<std::uint64_t, Tensor*>> state_tensors() override {
    std::vector<std::pair<std::uint64_t, Tensor*>> out;
    for (Parameter* p : parameters()) out.emplace_back(p->id, &p->value);
    for (auto& agent : agents_.agents) {
      std::visit(
          [&](auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, TabularPolicy>) {
              for (auto& e : p.tensors()) out.push_back(e);
            } else {
              for (Parameter* q : p.parameters()) out.emplace_back(q->id, &q->value);
            }
          },
          agent);
    }
    if (agents_.dispatcher) {
      for (Parameter* q : agents_.dispatcher->parameters()) out.emplace_back(q->id, &q->value);
    }
    return out;
  }

  const std::optional<Trace>& last_trace() const { return last_trace_; }

 private:
  void build_agents() {
    agents_.mode = config_.agent_mode;
    const std::size_t count = config_.agent_mode == AgentMode::single ? 1 : config_.num_tasks;
    PolicyDims dims;
    for (std::size_t d = 0; d < registry_->max_depth(); ++d) dims.actions_per_depth.push_back(registry_->num_actions(d));
    dims.input_dims = depth_input_dims();
    dims.num_tasks = config_.num_tasks;
    dims.hidden = config_.approx_hidden;
    std::uint64_t next = registry_->next_param_id();
    for (std::size_t a = 0; a < count; ++a) {
      agents_.agents.push_back(init_policy(config_.policy_kind, dims, init_rng_(), next));
      next = std::visit([](const auto& p) { return p.next_id(); }, agents_.agents.back());
    }
    if (config_.agent_mode == AgentMode::dispatched) {
      const std::size_t in = registry_->input_dim();
      const std::size_t out = count;
      agents_.dispatcher.emplace(PolicyMode::policy_gradient, std::span<const std::size_t>(&in, 1),
                                 std::span<const std::size_t>(&out, 1), config_.num_tasks, init_rng_,
                                 config_.approx_hidden, next);
    }
    agents_.validate(config_.num_tasks);
  }

  RoutedModelConfig config_;
  Rng init_rng_;
  Rng sample_rng_;
  Encoder encoder_;
  std::unique_ptr<BlockRegistry> registry_;
  AgentSet agents_;
  BlockUsageHistory history_;
  WplState wpl_state_;
  std::map<std::size_t, ReturnBaseline> baselines_;
  ReturnBaseline dispatch_baseline_;
  std::optional<Trace> last_trace_;
};

}  // namespace rnet
