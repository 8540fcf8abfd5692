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

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rnet/rnet.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Config file (optional) followed by --key value overrides.
rnet::ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& extras) {
  rnet::ExperimentConfig c = path.empty() ? rnet::ExperimentConfig{} : rnet::ExperimentConfig::load(path);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0) throw rnet::ConfigError("unexpected argument '" + key + "'");
    key = key.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw rnet::ConfigError("override --" + key + " needs a value");
      value = extras[++i];
    }
    c.set(key, value);
  }
  return c;
}

void print_accuracy(const rnet::AccuracyTable& a) {
  for (std::size_t t = 0; t < a.per_task.size(); ++t) std::cout << "task " << t << ": " << a.per_task[t] << '\n';
  std::cout << "mean: " << a.mean << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Routing networks for multi-task learning"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "train one configuration (all seeds)");
  train->add_option("-c,--config", config_path, "key=value config file");
  train->allow_extras();

  std::string run_dir;
  auto* eval = app.add_subcommand("eval", "evaluate a run directory's checkpoint on its test split");
  eval->add_option("run", run_dir, "run directory")->required();

  std::string rhos = "0.0,0.1,0.3";
  auto* sweep = app.add_subcommand("sweep-rho", "one run per collaboration-reward value");
  sweep->add_option("-c,--config", config_path, "key=value config file");
  sweep->add_option("--rhos", rhos, "comma-separated rho values");
  sweep->allow_extras();

  std::string blocks = "2,3,5,10";
  std::string archs = "routing,cross_stitch";
  std::string out_path;
  rnet::ScalingOptions scaling;
  auto* bench = app.add_subcommand("bench-scaling", "per-task training cost versus number of blocks");
  bench->add_option("--blocks", blocks, "comma-separated block counts");
  bench->add_option("--architectures", archs, "routing and/or cross_stitch");
  bench->add_option("--samples-per-task", scaling.samples_per_task);
  bench->add_option("--timed-epochs", scaling.timed_epochs)->check(CLI::PositiveNumber);
  bench->add_option("--seed", scaling.seed);
  bench->add_option("-o,--out", out_path, "CSV output (stdout if omitted)");

  auto* map = app.add_subcommand("export-map", "write the per-task routing map of a run as JSON");
  map->add_option("run", run_dir, "run directory")->required();
  map->add_option("-o,--out", out_path, "JSON output (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto config = config_from(config_path, train->remaining());
      const auto result = rnet::run_experiment(config);
      for (const auto& run : result.runs) {
        std::cout << "seed " << run.seed << '\n';
        print_accuracy(run.final_accuracy());
      }
      std::cout << result.aggregate_json().dump(2) << '\n';
    } else if (*eval) {
      print_accuracy(rnet::evaluate_run(run_dir));
    } else if (*sweep) {
      const auto config = config_from(config_path, sweep->remaining());
      std::vector<double> values;
      for (const auto& s : split_list(rhos)) values.push_back(std::stod(s));
      const auto result = rnet::rho_sweep(config, values);
      result.write_csv(std::cout);
    } else if (*bench) {
      std::vector<std::size_t> ks;
      for (const auto& s : split_list(blocks)) ks.push_back(std::stoul(s));
      const auto rows = rnet::scaling_benchmark(ks, split_list(archs), scaling);
      if (out_path.empty()) {
        rnet::write_scaling_csv(std::cout, rows);
      } else {
        std::ofstream os(out_path);
        rnet::write_scaling_csv(os, rows);
      }
    } else if (*map) {
      const auto json = rnet::routing_map_of_run(run_dir).to_json().dump(2);
      if (out_path.empty()) {
        std::cout << json << '\n';
      } else {
        std::ofstream(out_path) << json << '\n';
      }
    }
  } catch (const rnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
