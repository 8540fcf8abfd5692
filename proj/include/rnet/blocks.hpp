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
#include <string>
#include <vector>

#include "json.hpp"
#include "rnet/autodiff.hpp"
#include "rnet/errors.hpp"
#include "rnet/params.hpp"

namespace rnet {

enum class BlockKind { affine_relu, affine_softmax_classifier };

inline const char* to_string(BlockKind k) {
  return k == BlockKind::affine_relu ? "affine_relu" : "affine_softmax_classifier";
}

/// A routable layer: affine map followed by ReLU, or by softmax for the
/// classification layer.
struct FunctionBlock {
  std::size_t layer = 0;
  std::size_t index = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  BlockKind kind = BlockKind::affine_relu;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  Var apply(Tape& tape, Var v) const {
    if (v.value().rank() != 1 || v.value().size() != in_dim) {
      throw DimensionError("block (" + std::to_string(layer) + "," + std::to_string(index) + ") expects [" +
                           std::to_string(in_dim) + "], got " + shape_string(v.value().shape()));
    }
    Var y = ad::linear(v, tape.param(*weight), tape.param(*bias));
    return kind == BlockKind::affine_relu ? ad::relu(y) : ad::softmax(y);
  }

  std::vector<Parameter*> parameters() const { return {weight, bias}; }
};

/// One router step's choice: a block of some layer, or PASS.
struct Action {
  enum class Kind { block, pass };
  Kind kind = Kind::block;
  std::size_t layer = 0;
  std::size_t index = 0;

  static Action pass() { return Action{Kind::pass, 0, 0}; }
  bool is_pass() const { return kind == Kind::pass; }
  bool operator==(const Action&) const = default;
};

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t blocks = 1;
  BlockKind kind = BlockKind::affine_relu;
};

struct RegistryConfig {
  std::vector<LayerSpec> layers;
  bool layered = true;
  bool pass_enabled = false;
};

/// Standard routed stack: in -> hidden -> hidden -> classes, k blocks per layer.
inline RegistryConfig fc_stack(std::size_t in_dim, std::size_t hidden, std::size_t classes, std::size_t k,
                               bool layered = true, bool pass_enabled = false) {
  RegistryConfig c;
  c.layers = {{in_dim, hidden, k, BlockKind::affine_relu},
              {hidden, hidden, k, BlockKind::affine_relu},
              {hidden, classes, k, BlockKind::affine_softmax_classifier}};
  c.layered = layered;
  c.pass_enabled = pass_enabled;
  return c;
}

/// Function blocks grouped by layer, plus the action set the router may pick
/// from at each depth.
///
/// Layered mode: depth d offers the blocks of layer d, plus PASS when that
/// layer is square and PASS is enabled. Non-layered mode: every depth whose
/// layer is square offers the union of all square layers' blocks (plus PASS);
/// other depths behave as in layered mode.
class BlockRegistry {
 public:
  BlockRegistry(RegistryConfig config, Rng& rng, std::uint64_t first_param_id = 0)
      : config_(std::move(config)), store_(first_param_id) {
    validate();
    for (std::size_t l = 0; l < config_.layers.size(); ++l) {
      const LayerSpec& spec = config_.layers[l];
      std::vector<FunctionBlock> group;
      for (std::size_t i = 0; i < spec.blocks; ++i) {
        FunctionBlock b;
        b.layer = l;
        b.index = i;
        b.in_dim = spec.in_dim;
        b.out_dim = spec.out_dim;
        b.kind = spec.kind;
        b.weight = &store_.create(glorot_uniform(spec.out_dim, spec.in_dim, rng));
        b.bias = &store_.create(Tensor({spec.out_dim}));
        group.push_back(b);
      }
      blocks_.push_back(std::move(group));
    }
    build_actions();
  }

  BlockRegistry(BlockRegistry&&) = default;
  BlockRegistry& operator=(BlockRegistry&&) = default;

  const RegistryConfig& config() const { return config_; }
  std::size_t num_layers() const { return blocks_.size(); }
  std::size_t max_depth() const { return blocks_.size(); }
  bool layered() const { return config_.layered; }
  bool pass_enabled() const { return config_.pass_enabled; }
  std::size_t input_dim() const { return config_.layers.front().in_dim; }
  std::size_t output_dim() const { return config_.layers.back().out_dim; }

  const FunctionBlock& block(std::size_t layer, std::size_t index) const {
    if (layer >= blocks_.size() || index >= blocks_[layer].size()) {
      throw LookupError("no function block (" + std::to_string(layer) + "," + std::to_string(index) + ")");
    }
    return blocks_[layer][index];
  }
  FunctionBlock& block(std::size_t layer, std::size_t index) {
    return const_cast<FunctionBlock&>(static_cast<const BlockRegistry&>(*this).block(layer, index));
  }

  const std::vector<FunctionBlock>& layer(std::size_t l) const { return blocks_.at(l); }

  /// Actions available at 0-based depth `depth`.
  const std::vector<Action>& legal_actions(std::size_t depth) const {
    if (depth >= actions_.size()) {
      throw ContractError("depth " + std::to_string(depth) + " outside [0, " + std::to_string(actions_.size()) + ")");
    }
    return actions_[depth];
  }

  std::size_t num_actions(std::size_t depth) const { return legal_actions(depth).size(); }

  std::vector<Parameter*> parameters() { return store_.all(); }
  std::uint64_t next_param_id() const { return store_.next_id(); }

  nlohmann::json topology_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : config_.layers) {
      layers.push_back({{"in_dim", l.in_dim}, {"out_dim", l.out_dim}, {"blocks", l.blocks}, {"kind", to_string(l.kind)}});
    }
    return {{"layers", layers}, {"pass_enabled", config_.pass_enabled}, {"layered", config_.layered}};
  }

 private:
  static bool square(const LayerSpec& l) { return l.in_dim == l.out_dim; }

  void validate() const {
    const auto& ls = config_.layers;
    if (ls.empty()) throw ConfigError("registry needs at least one layer");
    for (std::size_t l = 0; l < ls.size(); ++l) {
      if (ls[l].in_dim == 0 || ls[l].out_dim == 0 || ls[l].blocks == 0) {
        throw ConfigError("layer " + std::to_string(l) + " has a zero dimension or no blocks");
      }
      if (ls[l].kind == BlockKind::affine_softmax_classifier && l + 1 != ls.size()) {
        throw ConfigError("classifier blocks are only allowed in the final layer");
      }
      if (l + 1 < ls.size() && ls[l].out_dim != ls[l + 1].in_dim) {
        throw DimensionError("layer " + std::to_string(l) + " outputs " + std::to_string(ls[l].out_dim) +
                             " but layer " + std::to_string(l + 1) + " takes " + std::to_string(ls[l + 1].in_dim));
      }
    }
    const bool any_square = std::any_of(ls.begin(), ls.end(), [](const LayerSpec& l) {
      return square(l) && l.kind == BlockKind::affine_relu;
    });
    if (config_.pass_enabled && !any_square) throw ConfigError("PASS requires a hidden layer with in_dim == out_dim");
    if (!config_.layered) {
      std::size_t dim = 0;
      for (const auto& l : ls) {
        if (!square(l) || l.kind != BlockKind::affine_relu) continue;
        if (dim != 0 && l.in_dim != dim) throw ConfigError("non-layered mode needs all square layers to share a width");
        dim = l.in_dim;
      }
    }
  }

  void build_actions() {
    const auto& ls = config_.layers;
    for (std::size_t d = 0; d < ls.size(); ++d) {
      std::vector<Action> acts;
      const bool recurrent = square(ls[d]) && ls[d].kind == BlockKind::affine_relu;
      if (!config_.layered && recurrent) {
        for (std::size_t l = 0; l < ls.size(); ++l) {
          if (!square(ls[l]) || ls[l].kind != BlockKind::affine_relu) continue;
          for (std::size_t i = 0; i < ls[l].blocks; ++i) acts.push_back({Action::Kind::block, l, i});
        }
      } else {
        for (std::size_t i = 0; i < ls[d].blocks; ++i) acts.push_back({Action::Kind::block, d, i});
      }
      if (config_.pass_enabled && recurrent) acts.push_back(Action::pass());
      actions_.push_back(std::move(acts));
    }
  }

  RegistryConfig config_;
  ParameterStore store_;
  std::vector<std::vector<FunctionBlock>> blocks_;
  std::vector<std::vector<Action>> actions_;
};

inline Var apply_block(const BlockRegistry& registry, std::size_t layer, std::size_t index, Var v) {
  return registry.block(layer, index).apply(*v.tape, v);
}

inline Tensor apply_block(const BlockRegistry& registry, std::size_t layer, std::size_t index, const Tensor& v) {
  Tape tape;
  return apply_block(registry, layer, index, tape.constant(v)).value();
}

/// Router input: representation, task id, 1-based depth.
struct RoutingState {
  Tensor v;
  std::size_t t = 0;
  std::size_t i = 1;
};

/// PASS keeps the representation and task, and advances the depth.
inline RoutingState apply_pass(const BlockRegistry& registry, RoutingState state) {
  if (!registry.pass_enabled()) throw ContractError("PASS is disabled for this registry");
  ++state.i;
  return state;
}

}  // namespace rnet
