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

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnet/baselines.hpp"
#include "rnet/datasets.hpp"
#include "rnet/diagnostics.hpp"
#include "rnet/model.hpp"

namespace rnet {

/// Declarative description of one run. Serialized as flat key=value lines.
struct ExperimentConfig {
  std::string dataset = "interference";
  std::string architecture = "routing_all_fc";
  std::string rl = "wpl";
  std::string policy = "auto";  // auto | tabular | approx
  double rho = 0.0;
  std::string collab_kind = "avg_probability";
  std::string final_reward = "plus_minus_one";
  double gamma = 1.0;
  double lambda_pi = 0.05;
  double q_alpha = 0.1;
  double router_lr = 0.01;
  std::string wpl_variant = "standard";
  std::string wpl_baseline = "per_depth";
  bool reinforce_baseline = false;
  double lr = 0.01;
  std::size_t anneal_every = 20;
  double anneal_divisor = 10.0;
  std::size_t batch_size = 32;
  std::size_t hidden_dim = 48;
  std::size_t encoder_dim = 0;
  std::size_t blocks_per_layer = 0;  // 0: one block per task
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  std::size_t runs = 1;
  std::string output_dir = "runs/default";
  std::size_t num_tasks = 4;
  std::size_t input_dim = 16;
  std::size_t samples_per_task = 2000;
  std::size_t test_per_task = 500;
  std::size_t clusters = 8;
  double flip_fraction = 1.0;
  std::string mnist_dir;
  std::size_t timeline_every = 1000;
  std::size_t metrics_stride = 1;
  double usage_decay = 0.99;
  double epsilon_fraction = 0.25;

  using Fields = std::vector<std::pair<std::string, std::string>>;

  Fields to_fields() const {
    auto num = [](auto v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    return {{"dataset", dataset},
            {"architecture", architecture},
            {"rl", rl},
            {"policy", policy},
            {"rho", num(rho)},
            {"collab_kind", collab_kind},
            {"final_reward", final_reward},
            {"gamma", num(gamma)},
            {"lambda_pi", num(lambda_pi)},
            {"q_alpha", num(q_alpha)},
            {"router_lr", num(router_lr)},
            {"wpl_variant", wpl_variant},
            {"wpl_baseline", wpl_baseline},
            {"reinforce_baseline", reinforce_baseline ? "true" : "false"},
            {"lr", num(lr)},
            {"anneal_every", num(anneal_every)},
            {"anneal_divisor", num(anneal_divisor)},
            {"batch_size", num(batch_size)},
            {"hidden_dim", num(hidden_dim)},
            {"encoder_dim", num(encoder_dim)},
            {"blocks_per_layer", num(blocks_per_layer)},
            {"epochs", num(epochs)},
            {"seed", num(seed)},
            {"runs", num(runs)},
            {"output_dir", output_dir},
            {"num_tasks", num(num_tasks)},
            {"input_dim", num(input_dim)},
            {"samples_per_task", num(samples_per_task)},
            {"test_per_task", num(test_per_task)},
            {"clusters", num(clusters)},
            {"flip_fraction", num(flip_fraction)},
            {"mnist_dir", mnist_dir},
            {"timeline_every", num(timeline_every)},
            {"metrics_stride", num(metrics_stride)},
            {"usage_decay", num(usage_decay)},
            {"epsilon_fraction", num(epsilon_fraction)}};
  }

  void set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': '" + value + "' is not a number");
      }
      if (pos != value.size()) throw ConfigError("key '" + key + "': '" + value + "' is not a number");
      return v;
    };
    auto as_size = [&] {
      if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("key '" + key + "': '" + value + "' is not a non-negative integer");
      }
      return static_cast<std::size_t>(std::stoull(value));
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("key '" + key + "': '" + value + "' is not a boolean");
    };
    if (key == "dataset") dataset = value;
    else if (key == "architecture") architecture = value;
    else if (key == "rl") rl = value;
    else if (key == "policy") policy = value;
    else if (key == "rho") rho = as_double();
    else if (key == "collab_kind") collab_kind = value;
    else if (key == "final_reward") final_reward = value;
    else if (key == "gamma") gamma = as_double();
    else if (key == "lambda_pi") lambda_pi = as_double();
    else if (key == "q_alpha") q_alpha = as_double();
    else if (key == "router_lr") router_lr = as_double();
    else if (key == "wpl_variant") wpl_variant = value;
    else if (key == "wpl_baseline") wpl_baseline = value;
    else if (key == "reinforce_baseline") reinforce_baseline = as_bool();
    else if (key == "lr") lr = as_double();
    else if (key == "anneal_every") anneal_every = as_size();
    else if (key == "anneal_divisor") anneal_divisor = as_double();
    else if (key == "batch_size") batch_size = as_size();
    else if (key == "hidden_dim") hidden_dim = as_size();
    else if (key == "encoder_dim") encoder_dim = as_size();
    else if (key == "blocks_per_layer") blocks_per_layer = as_size();
    else if (key == "epochs") epochs = as_size();
    else if (key == "seed") seed = as_size();
    else if (key == "runs") runs = as_size();
    else if (key == "output_dir") output_dir = value;
    else if (key == "num_tasks") num_tasks = as_size();
    else if (key == "input_dim") input_dim = as_size();
    else if (key == "samples_per_task") samples_per_task = as_size();
    else if (key == "test_per_task") test_per_task = as_size();
    else if (key == "clusters") clusters = as_size();
    else if (key == "flip_fraction") flip_fraction = as_double();
    else if (key == "mnist_dir") mnist_dir = value;
    else if (key == "timeline_every") timeline_every = as_size();
    else if (key == "metrics_stride") metrics_stride = as_size();
    else if (key == "usage_decay") usage_decay = as_double();
    else if (key == "epsilon_fraction") epsilon_fraction = as_double();
    else throw ConfigError("unknown config key '" + key + "'");
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_fields()) os << k << '=' << v << '\n';
    return os.str();
  }

  static ExperimentConfig parse(std::istream& is) {
    ExperimentConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    return parse(is);
  }

  bool operator==(const ExperimentConfig& o) const { return to_fields() == o.to_fields(); }

  bool is_routing() const { return architecture.rfind("routing_", 0) == 0; }
  std::size_t blocks() const { return blocks_per_layer ? blocks_per_layer : num_tasks; }

  /// Tabular or approximator agents after resolving `policy=auto`.
  std::string resolved_policy() const {
    if (policy != "auto") return policy;
    if (rl == "wpl" || rl == "q_tabular") return "tabular";
    return "approx";
  }

  /// Rejects unknown names and combinations outside the supported grid.
  void validate() const {
    static const std::vector<std::string> archs = {"routing_all_fc",     "routing_all_fc_recurrent_pass",
                                                   "routing_single_agent", "routing_dispatched",
                                                   "task_specific_1fc",  "task_specific_allfc",
                                                   "cross_stitch",       "soft_mixture"};
    auto one_of = [](const std::string& v, const std::vector<std::string>& xs, const char* key) {
      if (std::find(xs.begin(), xs.end(), v) == xs.end()) throw ConfigError(std::string("unknown ") + key + " '" + v + "'");
    };
    one_of(dataset, {"interference", "mnist_mtl"}, "dataset");
    one_of(architecture, archs, "architecture");
    one_of(rl, {"wpl", "reinforce", "q_tabular", "q_approx"}, "rl");
    one_of(policy, {"auto", "tabular", "approx"}, "policy");
    one_of(collab_kind, {"avg_probability", "avg_times_chosen"}, "collab_kind");
    one_of(final_reward, {"plus_minus_one", "negative_loss"}, "final_reward");
    one_of(wpl_variant, {"standard", "swapped"}, "wpl_variant");
    one_of(wpl_baseline, {"per_action", "per_depth"}, "wpl_baseline");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (epochs == 0 || batch_size == 0 || hidden_dim == 0 || runs == 0 || timeline_every == 0 || metrics_stride == 0) {
      throw ConfigError("epochs, batch_size, hidden_dim, runs, timeline_every and metrics_stride must be positive");
    }
    SgdConfig{lr, anneal_every, anneal_divisor}.validate();
    if (dataset == "mnist_mtl" && mnist_dir.empty()) throw ConfigError("dataset mnist_mtl needs mnist_dir");
    if (dataset == "interference" && (num_tasks < 2 || input_dim < 2)) {
      throw ConfigError("interference dataset needs num_tasks >= 2 and input_dim >= 2");
    }
    if (!is_routing()) return;
    const std::string pol = resolved_policy();
    if (rl == "wpl" && pol != "tabular") {
      throw ConfigError("rl=wpl is defined only for tabular policies (MARL:WPL uses one table per task agent)");
    }
    if (rl == "q_tabular" && pol != "tabular") throw ConfigError("rl=q_tabular needs policy=tabular");
    if (rl == "q_approx" && pol != "approx") throw ConfigError("rl=q_approx needs policy=approx");
    const bool per_task = architecture == "routing_all_fc" || architecture == "routing_all_fc_recurrent_pass";
    if (!per_task && rl == "wpl") {
      throw ConfigError("rl=wpl needs per-task agents; " + architecture + " is not a per-task router");
    }
    if (!per_task && pol == "tabular") {
      throw ConfigError(architecture + " uses approximator agents over (v, t, d); tabular policies are not supported");
    }
  }
};

inline SgdConfig sgd_of(const ExperimentConfig& c) { return {c.lr, c.anneal_every, c.anneal_divisor}; }

inline TaskSplit load_dataset(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.dataset == "mnist_mtl") return build_mnist_mtl(MnistFiles::in_directory(c.mnist_dir), seed);
  InterferenceOptions opt;
  opt.num_tasks = c.num_tasks;
  opt.dim = c.input_dim;
  opt.samples_per_task = c.samples_per_task;
  opt.test_per_task = c.test_per_task;
  opt.clusters = c.clusters;
  opt.flip_fraction = c.flip_fraction;
  return build_interference_tasks(opt, seed);
}

inline RoutedModelConfig routed_config(const ExperimentConfig& c, std::size_t input_dim, std::size_t num_tasks,
                                       std::size_t classes) {
  RoutedModelConfig r;
  r.input_dim = input_dim;
  r.num_tasks = num_tasks;
  const std::size_t k = c.blocks_per_layer ? c.blocks_per_layer : num_tasks;
  r.encoder_dim = c.encoder_dim;
  if (c.architecture == "routing_all_fc_recurrent_pass") {
    // Square routed layers on both hidden depths: the encoder maps into the hidden width.
    r.encoder_dim = c.hidden_dim;
    r.registry.layers = {{c.hidden_dim, c.hidden_dim, k, BlockKind::affine_relu},
                         {c.hidden_dim, c.hidden_dim, k, BlockKind::affine_relu},
                         {c.hidden_dim, classes, k, BlockKind::affine_softmax_classifier}};
    r.registry.layered = false;
    r.registry.pass_enabled = true;
  } else {
    const std::size_t in = r.encoder_dim ? r.encoder_dim : input_dim;
    r.registry = fc_stack(in, c.hidden_dim, classes, k);
  }
  if (c.architecture == "routing_single_agent") r.agent_mode = AgentMode::single;
  else if (c.architecture == "routing_dispatched") r.agent_mode = AgentMode::dispatched;
  else r.agent_mode = AgentMode::per_task;
  const bool tabular = c.resolved_policy() == "tabular";
  if (c.rl == "wpl" || c.rl == "reinforce") {
    r.policy_kind = tabular ? PolicyKind::tabular_pg : PolicyKind::approx_pg;
  } else {
    r.policy_kind = tabular ? PolicyKind::tabular_q : PolicyKind::approx_q;
  }
  if (c.rl == "wpl") r.rl = RlAlgorithm::wpl;
  else if (c.rl == "reinforce") r.rl = RlAlgorithm::reinforce;
  else if (c.rl == "q_tabular") r.rl = RlAlgorithm::q_tabular;
  else r.rl = RlAlgorithm::q_approx;
  r.reward.rho = c.rho;
  r.reward.gamma = c.gamma;
  r.reward.collab_kind = c.collab_kind == "avg_times_chosen" ? CollabKind::avg_times_chosen : CollabKind::avg_probability;
  r.reward.final_kind = c.final_reward == "negative_loss" ? FinalRewardKind::negative_loss : FinalRewardKind::plus_minus_one;
  r.wpl = {c.lambda_pi, c.gamma, c.wpl_variant == "swapped" ? WplVariant::swapped : WplVariant::standard,
           c.wpl_baseline == "per_depth" ? WplBaseline::per_depth : WplBaseline::per_action};
  r.reinforce.lambda_pi = c.lambda_pi;
  r.reinforce.learning_rate = c.router_lr;
  r.reinforce.gamma = c.gamma;
  r.reinforce.baseline = c.reinforce_baseline;
  r.q.alpha = c.q_alpha;
  r.q.learning_rate = c.router_lr;
  r.q.gamma = c.gamma;
  r.usage_decay = c.usage_decay;
  r.epsilon_fraction = c.epsilon_fraction;
  return r;
}

inline std::unique_ptr<MultiTaskModel> make_model(const ExperimentConfig& c, const TaskSplit& split, std::uint64_t seed) {
  if (c.is_routing()) {
    return std::make_unique<RoutedModel>(routed_config(c, split.input_dim(), split.num_tasks(), split.max_classes()), seed);
  }
  BaselineConfig b;
  if (c.architecture == "task_specific_1fc") b.kind = BaselineKind::task_specific_1fc;
  else if (c.architecture == "task_specific_allfc") b.kind = BaselineKind::task_specific_allfc;
  else if (c.architecture == "cross_stitch") b.kind = BaselineKind::cross_stitch;
  else if (c.architecture == "soft_mixture") b.kind = BaselineKind::soft_mixture;
  else throw ConfigError("unknown architecture '" + c.architecture + "'");
  b.input_dim = split.input_dim();
  b.hidden = c.hidden_dim;
  b.classes = split.max_classes();
  b.num_tasks = split.num_tasks();
  b.blocks = c.blocks_per_layer;
  b.encoder_dim = c.encoder_dim;
  return build_baseline(b, seed);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  AccuracyTable test;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t steps = 0;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, std::size_t sample_idx, const StepMetrics&, double lr)> on_step;
  std::function<void(std::size_t sample_count)> before_sample;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch loop: per-sample forward/backward (and router update), one SGD
/// step per batch on the mean gradient, test evaluation after every epoch.
inline std::vector<EpochRecord> train_model(MultiTaskModel& model, const TaskSplit& split, const SgdConfig& sgd,
                                            std::size_t epochs, std::size_t batch_size, std::uint64_t seed,
                                            const TrainHooks& hooks = {}) {
  Rng order_rng(seed ^ 0x5bd1e995ULL);
  const std::size_t total = epochs * split.train.size();
  std::size_t count = 0;
  std::vector<EpochRecord> records;
  auto params = model.parameters();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t flops0 = OpCounter::value();
    EpochRecord rec;
    rec.epoch = epoch;
    const auto order = epoch_order(split.train, split.num_tasks(), order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::size_t end = std::min(order.size(), b + batch_size);
      for (std::size_t j = b; j < end; ++j) {
        if (hooks.before_sample) hooks.before_sample(count);
        TrainContext ctx{epoch, total ? static_cast<double>(count) / static_cast<double>(total) : 0.0};
        StepMetrics m = model.train_sample(split.train[order[j]], ctx);
        loss_sum += m.loss;
        correct += m.correct ? 1 : 0;
        if (hooks.on_step) hooks.on_step(epoch, order[j], m, sgd.effective_lr(epoch));
        ++count;
      }
      sgd_step(params, sgd, epoch, 1.0 / static_cast<double>(end - b));
    }
    rec.flops = OpCounter::value() - flops0;
    rec.steps = order.size();
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, order.size()));
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, order.size()));
    rec.test = evaluate(model, split.test, split.num_tasks());
    if (hooks.on_epoch) hooks.on_epoch(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunReport {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::map<std::string, std::string> artifacts;

  const AccuracyTable& final_accuracy() const { return epochs.back().test; }

  nlohmann::json to_json(bool include_timing = true) const {
    nlohmann::json es = nlohmann::json::array();
    for (const auto& e : epochs) {
      nlohmann::json j = {{"epoch", e.epoch},
                          {"test", e.test.to_json()},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"flops", e.flops},
                          {"steps", e.steps}};
      if (include_timing) j["wall_seconds"] = e.wall_seconds;
      es.push_back(j);
    }
    return {{"seed", seed}, {"epochs", es}, {"artifacts", artifacts}};
  }
};

inline const std::vector<std::string>& run_artifact_names() {
  static const std::vector<std::string> names = {"config.txt",       "metrics.csv",    "timeline.csv",
                                                 "routing_map.json", "checkpoint.bin", "report.json"};
  return names;
}

/// One seed of one configuration, written into `dir`.
inline RunReport run_single(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ExperimentConfig copy = config;
  copy.seed = seed;
  copy.runs = 1;
  copy.output_dir = dir.string();
  {
    std::ofstream os(dir / "config.txt");
    os << copy.serialize();
  }
  const TaskSplit split = load_dataset(config, seed);
  auto model = make_model(config, split, seed);
  auto* routed = dynamic_cast<RoutedModel*>(model.get());

  std::ofstream metrics(dir / "metrics.csv");
  metrics << "epoch,sample_idx,task,loss,correct,r_final,actions,effective_lr\n";
  metrics << std::setprecision(10);
  PolicyTimeline timeline(config.timeline_every);
  std::size_t step = 0;
  TrainHooks hooks;
  hooks.before_sample = [&](std::size_t count) {
    if (routed) timeline.maybe_record(count, *routed);
  };
  hooks.on_step = [&](std::size_t epoch, std::size_t idx, const StepMetrics& m, double lr) {
    if (step++ % config.metrics_stride != 0) return;
    metrics << epoch << ',' << idx << ',' << m.task << ',' << m.loss << ',' << (m.correct ? 1 : 0) << ',' << m.r_final
            << ',';
    for (std::size_t i = 0; i < m.actions.size(); ++i) metrics << (i ? " " : "") << m.actions[i];
    metrics << ',' << lr << '\n';
  };

  RunReport report;
  report.seed = seed;
  report.epochs = train_model(*model, split, sgd_of(config), config.epochs, config.batch_size, seed, hooks);

  {
    std::ofstream os(dir / "timeline.csv");
    timeline.write_csv(os);
  }
  {
    nlohmann::json map_json = {{"tasks", nlohmann::json::array()}, {"distinct_per_depth", nlohmann::json::array()}};
    if (routed) map_json = export_routing_map(*routed, split.test, split.num_tasks()).to_json();
    std::ofstream os(dir / "routing_map.json");
    os << map_json.dump(2) << '\n';
  }
  checkpoint::save((dir / "checkpoint.bin").string(), model->checkpoint_entries());
  for (const auto& name : run_artifact_names()) report.artifacts[name] = (dir / name).string();
  {
    std::ofstream os(dir / "report.json");
    os << report.to_json().dump(2) << '\n';
  }
  return report;
}

struct ExperimentResult {
  std::vector<RunReport> runs;

  /// Mean of the final mean accuracy across seeds.
  double mean_final_accuracy() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.final_accuracy().mean;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }

  nlohmann::json aggregate_json() const {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& r : runs) {
      per_seed.push_back({{"seed", r.seed}, {"final", r.final_accuracy().to_json()}});
    }
    return {{"per_seed", per_seed}, {"mean_final_accuracy", mean_final_accuracy()}};
  }
};

inline std::uint64_t effective_seed(const ExperimentConfig& config) {
  if (const char* env = std::getenv("RNTN_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("RNTN_SEED is not an integer: ") + env);
    }
  }
  return config.seed;
}

/// Runs seeds base, base+1, ... With more than one seed every seed gets its
/// own sub-directory and an aggregate.json lists per-seed and mean results.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  const std::uint64_t base = effective_seed(config);
  ExperimentResult result;
  if (config.runs == 1) {
    result.runs.push_back(run_single(config, base, config.output_dir));
    return result;
  }
  for (std::size_t r = 0; r < config.runs; ++r) {
    const std::uint64_t seed = base + r;
    result.runs.push_back(run_single(config, seed, fs::path(config.output_dir) / ("seed_" + std::to_string(seed))));
  }
  std::ofstream os(fs::path(config.output_dir) / "aggregate.json");
  os << result.aggregate_json().dump(2) << '\n';
  return result;
}

/// Loads a run directory's config and checkpoint and evaluates on the test split.
inline AccuracyTable evaluate_run(const std::filesystem::path& dir) {
  ExperimentConfig config = ExperimentConfig::load((dir / "config.txt").string());
  config.validate();
  const TaskSplit split = load_dataset(config, config.seed);
  auto model = make_model(config, split, config.seed);
  model->restore(checkpoint::load((dir / "checkpoint.bin").string()));
  return evaluate(*model, split.test, split.num_tasks());
}

inline RoutingMap routing_map_of_run(const std::filesystem::path& dir) {
  ExperimentConfig config = ExperimentConfig::load((dir / "config.txt").string());
  config.validate();
  if (!config.is_routing()) throw ConfigError("export-map needs a routing architecture, got " + config.architecture);
  const TaskSplit split = load_dataset(config, config.seed);
  auto model = make_model(config, split, config.seed);
  model->restore(checkpoint::load((dir / "checkpoint.bin").string()));
  return export_routing_map(dynamic_cast<RoutedModel&>(*model), split.test, split.num_tasks());
}

// ---------------------------------------------------------------------------
// Collaboration-reward sweep
// ---------------------------------------------------------------------------

struct SweepResult {
  std::vector<double> rhos;
  std::vector<ExperimentResult> results;

  void write_csv(std::ostream& os) const {
    os << "rho,seed,epoch,task,accuracy\n";
    for (std::size_t i = 0; i < rhos.size(); ++i) {
      for (const auto& run : results[i].runs) {
        for (const auto& e : run.epochs) {
          for (std::size_t t = 0; t < e.test.per_task.size(); ++t) {
            os << rhos[i] << ',' << run.seed << ',' << e.epoch << ',' << t << ',' << e.test.per_task[t] << '\n';
          }
          os << rhos[i] << ',' << run.seed << ',' << e.epoch << ",mean," << e.test.mean << '\n';
        }
      }
    }
  }
};

inline std::vector<double> default_rho_values() { return {0.0, 0.1, 0.3}; }

inline SweepResult rho_sweep(const ExperimentConfig& base, const std::vector<double>& rhos) {
  if (base.architecture == "task_specific_1fc" || base.architecture == "task_specific_allfc" ||
      base.architecture == "cross_stitch" || base.architecture == "soft_mixture") {
    throw ConfigError("rho sweep needs a routing architecture");
  }
  namespace fs = std::filesystem;
  SweepResult out;
  for (double rho : rhos) {
    ExperimentConfig c = base;
    c.rho = rho;
    std::ostringstream name;
    name << "rho_" << rho;
    c.output_dir = (fs::path(base.output_dir) / name.str()).string();
    out.rhos.push_back(rho);
    out.results.push_back(run_experiment(c));
  }
  fs::create_directories(base.output_dir);
  std::ofstream os(fs::path(base.output_dir) / "sweep.csv");
  out.write_csv(os);
  return out;
}

// ---------------------------------------------------------------------------
// Per-task training cost
// ---------------------------------------------------------------------------

struct ScalingRow {
  std::string architecture;
  std::size_t blocks = 0;
  std::uint64_t flops_per_step_min = 0;
  std::uint64_t flops_per_step_max = 0;
  double epoch_seconds = 0.0;    // mean over timed epochs
  double seconds_per_task = 0.0; // epoch_seconds / blocks
};

struct ScalingOptions {
  std::size_t samples_per_task = 100;
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 48;
  std::size_t timed_epochs = 3;
  std::uint64_t seed = 1;
};

/// One task per block. Op counts are exact per training step; wall time is
/// the mean of `timed_epochs` epochs after one warm-up epoch.
inline std::vector<ScalingRow> scaling_benchmark(const std::vector<std::size_t>& block_counts,
                                                 const std::vector<std::string>& architectures,
                                                 const ScalingOptions& opt = {}) {
  std::vector<ScalingRow> rows;
  for (const auto& arch : architectures) {
    if (arch != "routing" && arch != "cross_stitch") throw ConfigError("scaling benchmark supports routing and cross_stitch");
    for (std::size_t k : block_counts) {
      ExperimentConfig c;
      c.architecture = arch == "routing" ? "routing_all_fc" : "cross_stitch";
      c.num_tasks = k;
      c.input_dim = opt.input_dim;
      c.hidden_dim = opt.hidden_dim;
      c.samples_per_task = opt.samples_per_task;
      c.test_per_task = 10;
      const TaskSplit split = load_dataset(c, opt.seed);
      auto model = make_model(c, split, opt.seed);
      ScalingRow row;
      row.architecture = arch;
      row.blocks = k;
      row.flops_per_step_min = std::numeric_limits<std::uint64_t>::max();
      auto params = model->parameters();
      const SgdConfig sgd = sgd_of(c);
      double timed = 0.0;
      Rng rng(opt.seed);
      for (std::size_t epoch = 0; epoch <= opt.timed_epochs; ++epoch) {
        const auto order = epoch_order(split.train, split.num_tasks(), rng);
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t idx : order) {
          const std::uint64_t before = OpCounter::value();
          model->train_sample(split.train[idx], TrainContext{epoch, 0.0});
          const std::uint64_t used = OpCounter::value() - before;
          row.flops_per_step_min = std::min(row.flops_per_step_min, used);
          row.flops_per_step_max = std::max(row.flops_per_step_max, used);
          sgd_step(params, sgd, epoch);
        }
        if (epoch > 0) timed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      row.epoch_seconds = timed / static_cast<double>(opt.timed_epochs);
      row.seconds_per_task = row.epoch_seconds / static_cast<double>(k);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << "architecture,blocks,flops_per_step_min,flops_per_step_max,epoch_seconds,seconds_per_task\n";
  for (const auto& r : rows) {
    os << r.architecture << ',' << r.blocks << ',' << r.flops_per_step_min << ',' << r.flops_per_step_max << ','
       << r.epoch_seconds << ',' << r.seconds_per_task << '\n';
  }
}

}  // namespace rnet
