// Copyright 2026 The madiff-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MADIFF__CLI_HPP_
#define MADIFF__CLI_HPP_

#include "madiff/denoiser_net.hpp"
#include "madiff/diffusion_schedule.hpp"
#include "madiff/inverse_dynamics.hpp"
#include "madiff/planner.hpp"
#include "madiff/toy_envs.hpp"
#include "madiff/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace madiff::cli
{

/// Schema or value problem in a run configuration; `path` is the dotted field.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string path, const std::string & what)
  : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path))
  {
  }
  const std::string & path() const { return path_; }

private:
  std::string path_;
};

/// Every recognised field with its default value; null marks optional values.
nlohmann::json default_config();

/// Overlays `user` onto `defaults`, rejecting unknown keys and type mismatches.
nlohmann::json merge_config(const nlohmann::json & defaults, const nlohmann::json & user);

/// Applies "dotted.path=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json & config, const std::string & assignment);

struct BenchConfig
{
  std::vector<int> agent_counts{8, 16, 32};
  int trials = 100;
  int obs_dim = 88;
  int history = 20;
  int horizon = 8;
  int diffusion_steps = 200;
  int ddim_steps = 15;
};

struct RunConfig
{
  nlohmann::json resolved;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path dataset_path;
  std::filesystem::path checkpoint_path;
  env::SpreadConfig env;
  env::PolicyMix mix;
  env::ScriptedConfig scripted;
  int data_episodes = 0;
  net::NetConfig net;  // data-dependent dimensions are filled in by the commands
  invdyn::InvDynConfig invdyn;
  train::TrainConfig train;
  plan::PlanConfig plan;
  std::optional<double> target_return;
  double target_percentile = 0.95;
  int rollout_episodes = 100;
  bool rollout_log_plans = false;
  int rollout_batch = 100;
  int eval_episodes = 100;
  int consistency_step = 9;
  double consistency_tol = 0.1;
  std::optional<std::filesystem::path> predict_dataset;
  int predict_episodes = 50;
  int predict_samples = 20;
  int predict_min_k = 20;
  bool predict_per_agent = false;
  BenchConfig bench;
};

/// Builds typed settings from a merged document; semantic violations raise ConfigError.
RunConfig parse_run_config(const nlohmann::json & resolved);

struct BenchRow
{
  int n_agents = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int trials = 0;
};

/// Wall time of one batched DDIM plan (all agents, shared parameters) per agent count.
std::vector<BenchRow> bench_sampling(const BenchConfig & config, std::uint64_t seed);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

}  // namespace madiff::cli

#endif  // MADIFF__CLI_HPP_
