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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rnet/autodiff.hpp"
#include "rnet/model.hpp"
#include "rnet/params.hpp"

namespace rnet {

/// output_i = sum_j weights[i][j] * inputs[j] for a k x k mixing matrix.
inline std::vector<Var> cross_stitch_forward(std::span<const Var> inputs, Var weights) {
  const Tensor& w = weights.value();
  if (w.rank() != 2 || w.dim(0) != inputs.size() || w.dim(1) != inputs.size()) {
    throw DimensionError("cross-stitch weights " + shape_string(w.shape()) + " for " + std::to_string(inputs.size()) +
                         " activations");
  }
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(ad::weighted_sum(inputs, ad::row(weights, i)));
  return out;
}

/// softmax(logits) . stack(outputs); every block output participates.
inline Var soft_mixture_forward(std::span<const Var> outputs, Var logits) {
  return ad::weighted_sum(outputs, ad::softmax(logits));
}

enum class BaselineKind { task_specific_1fc, task_specific_allfc, cross_stitch, soft_mixture };

inline const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::task_specific_1fc: return "task_specific_1fc";
    case BaselineKind::task_specific_allfc: return "task_specific_allfc";
    case BaselineKind::cross_stitch: return "cross_stitch";
    case BaselineKind::soft_mixture: return "soft_mixture";
  }
  return "?";
}

struct BaselineConfig {
  BaselineKind kind = BaselineKind::task_specific_1fc;
  std::size_t input_dim = 0;
  std::size_t hidden = 48;
  std::size_t classes = 2;
  std::size_t num_tasks = 1;
  std::size_t blocks = 0;  // columns / blocks per layer; 0 means one per task
  std::size_t encoder_dim = 0;
  double stitch_noise = 0.01;  // cross-stitch init: identity + U(-noise, noise)
  bool train_mixing = true;    // cross-stitch weights and soft-mixture logits
};

/// Static-sharing and soft-routing comparison models over the same fully
/// connected stack as the routed model.
class BaselineModel : public MultiTaskModel {
 public:
  struct Dense {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
    bool classifier = false;

    Var apply(Tape& tape, Var x) const {
      Var y = ad::linear(x, tape.param(*w), tape.param(*b));
      return classifier ? ad::softmax(y) : ad::relu(y);
    }
  };

  BaselineModel(const BaselineConfig& config, std::uint64_t seed) : config_(config), store_(std::make_unique<ParameterStore>()) {
    Rng rng(seed);
    if (config_.blocks == 0) config_.blocks = config_.num_tasks;
    if (config_.num_tasks == 0 || config_.input_dim == 0) throw ConfigError("baseline needs tasks and an input width");
    encoder_ = config_.encoder_dim ? Encoder(config_.input_dim, config_.encoder_dim, rng, 0) : Encoder::identity(0);
    store_ = std::make_unique<ParameterStore>(encoder_.next_id());
    const std::size_t in = encoder_.output_dim(config_.input_dim);
    const std::size_t h = config_.hidden, c = config_.classes;
    auto dense = [&](std::size_t from, std::size_t to, bool cls) {
      Dense d;
      d.w = &store_->create(glorot_uniform(to, from, rng));
      d.b = &store_->create(Tensor({to}));
      d.classifier = cls;
      return d;
    };
    auto stack = [&] { return std::vector<Dense>{dense(in, h, false), dense(h, h, false), dense(h, c, true)}; };
    switch (config_.kind) {
      case BaselineKind::task_specific_1fc:
        trunk_ = {dense(in, h, false), dense(h, h, false)};
        for (std::size_t t = 0; t < config_.num_tasks; ++t) heads_.push_back(dense(h, c, true));
        break;
      case BaselineKind::task_specific_allfc:
        for (std::size_t t = 0; t < config_.num_tasks; ++t) columns_.push_back(stack());
        break;
      case BaselineKind::cross_stitch: {
        for (std::size_t j = 0; j < config_.blocks; ++j) columns_.push_back(stack());
        std::uniform_real_distribution<double> noise(-config_.stitch_noise, config_.stitch_noise);
        for (int l = 0; l < 2; ++l) {
          Tensor w = Tensor::identity(config_.blocks);
          if (config_.stitch_noise > 0.0) {
            for (auto& v : w.data()) v += noise(rng);
          }
          mixing_.push_back(&store_->create(std::move(w)));
        }
        break;
      }
      case BaselineKind::soft_mixture: {
        const std::size_t dims[4] = {in, h, h, c};
        for (std::size_t l = 0; l < 3; ++l) {
          std::vector<Dense> layer;
          for (std::size_t j = 0; j < config_.blocks; ++j) layer.push_back(dense(dims[l], dims[l + 1], l == 2));
          columns_.push_back(std::move(layer));
        }
        for (std::size_t t = 0; t < config_.num_tasks; ++t) {
          for (std::size_t l = 0; l < 3; ++l) mixing_.push_back(&store_->create(Tensor({config_.blocks})));
        }
        break;
      }
    }
  }

  const BaselineConfig& config() const { return config_; }

  Var forward(Tape& tape, const Tensor& x, std::size_t task) const {
    if (task >= config_.num_tasks) throw ContractError("task " + std::to_string(task) + " out of range");
    Var v = encoder_.apply(tape, x);
    switch (config_.kind) {
      case BaselineKind::task_specific_1fc:
        for (const auto& d : trunk_) v = d.apply(tape, v);
        return heads_[task].apply(tape, v);
      case BaselineKind::task_specific_allfc:
        for (const auto& d : columns_[task]) v = d.apply(tape, v);
        return v;
      case BaselineKind::cross_stitch: {
        const std::size_t k = config_.blocks;
        const std::size_t own = task % k;
        std::vector<Var> acts;
        for (std::size_t j = 0; j < k; ++j) acts.push_back(columns_[j][0].apply(tape, v));
        acts = cross_stitch_forward(acts, mixing_var(tape, 0));
        for (std::size_t j = 0; j < k; ++j) acts[j] = columns_[j][1].apply(tape, acts[j]);
        // Only this task's column reaches a classifier.
        Var in = ad::weighted_sum(acts, ad::row(mixing_var(tape, 1), own));
        return columns_[own][2].apply(tape, in);
      }
      case BaselineKind::soft_mixture:
        for (std::size_t l = 0; l < 3; ++l) {
          std::vector<Var> outs;
          for (const auto& d : columns_[l]) outs.push_back(d.apply(tape, v));
          v = soft_mixture_forward(outs, mixing_var(tape, task * 3 + l));
        }
        return v;
    }
    throw ContractError("unknown baseline kind");
  }

  StepMetrics train_sample(const MtlSample& sample, const TrainContext&) override {
    Tape tape;
    Var p = forward(tape, sample.x(), sample.task);
    Var loss = ad::nll(p, sample.label);
    tape.backward(loss);
    StepMetrics m;
    m.task = sample.task;
    m.loss = loss.value()[0];
    m.correct = argmax(p.value().data()) == sample.label;
    m.r_final = m.correct ? 1.0 : -1.0;
    return m;
  }

  Tensor predict(const Tensor& x, std::size_t task) const override {
    Tape tape;
    return forward(tape, x, task).value();
  }

  std::vector<Parameter*> parameters() override {
    auto out = encoder_.parameters();
    for (Parameter* p : store_->all()) {
      const bool is_mixing = std::find(mixing_.begin(), mixing_.end(), p) != mixing_.end();
      if (!is_mixing || config_.train_mixing) out.push_back(p);
    }
    return out;
  }

  std::vector<std::pair<std::uint64_t, Tensor*>> state_tensors() override {
    std::vector<std::pair<std::uint64_t, Tensor*>> out;
    for (Parameter* p : encoder_.parameters()) out.emplace_back(p->id, &p->value);
    for (Parameter* p : store_->all()) out.emplace_back(p->id, &p->value);
    return out;
  }

  /// Parameters of the fc layers dedicated to one task (1fc head, all-fc stack).
  std::vector<Parameter*> task_parameters(std::size_t task) const {
    std::vector<Parameter*> out;
    if (config_.kind == BaselineKind::task_specific_1fc) {
      out = {heads_.at(task).w, heads_.at(task).b};
    } else if (config_.kind == BaselineKind::task_specific_allfc || config_.kind == BaselineKind::cross_stitch) {
      for (const auto& d : columns_.at(task % columns_.size())) {
        out.push_back(d.w);
        out.push_back(d.b);
      }
    }
    return out;
  }

  std::vector<Parameter*> mixing_parameters() const { return mixing_; }

 private:
  Var mixing_var(Tape& tape, std::size_t i) const {
    Parameter* p = mixing_.at(i);
    return config_.train_mixing ? tape.param(*p) : tape.constant(p->value);
  }

  BaselineConfig config_;
  Encoder encoder_;
  std::unique_ptr<ParameterStore> store_;
  std::vector<Dense> trunk_;
  std::vector<Dense> heads_;
  std::vector<std::vector<Dense>> columns_;  // per task/column stacks, or per layer blocks for soft mixture
  std::vector<Parameter*> mixing_;
};

inline std::unique_ptr<BaselineModel> build_baseline(const BaselineConfig& config, std::uint64_t seed) {
  return std::make_unique<BaselineModel>(config, seed);
}

}  // namespace rnet
