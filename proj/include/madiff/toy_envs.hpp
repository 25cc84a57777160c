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

#ifndef MADIFF__TOY_ENVS_HPP_
#define MADIFF__TOY_ENVS_HPP_

#include "madiff/common.hpp"
#include "madiff/dataset.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace madiff::env
{

/// One row per agent.
using JointObs = std::vector<std::vector<double>>;
using JointAction = std::vector<std::vector<double>>;

struct StepResult
{
  JointObs obs;
  double reward = 0.0;
  bool done = false;
};

/// Cooperative multi-agent environment with a shared scalar reward.
class Environment
{
public:
  virtual ~Environment() = default;

  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual ActionKind act_kind() const { return ActionKind::continuous; }

  virtual JointObs reset(std::uint64_t seed) = 0;
  /// Throws InvalidState once the episode is over.
  virtual StepResult step(const JointAction & actions) = 0;
  virtual bool done() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct SpreadConfig
{
  int n_agents = 3;
  double sensing_radius = std::numeric_limits<double>::infinity();
  double collision_penalty = 1.0;
  double collision_radius = 0.15;
  double dt = 0.1;
  int t_max = 25;
  double max_speed = 2.0;
  std::uint64_t seed = 0;

  int obs_dim() const { return 4 * n_agents + 2; }
  void validate() const;
  nlohmann::json to_json() const;
  static SpreadConfig from_json(const nlohmann::json & j);
};

using Vec2 = std::array<double, 2>;

/**
 * N agents cover N landmarks in [-1, 1]^2 under double-integrator dynamics.
 * Observation of agent i: position, velocity, offsets to every landmark and
 * relative positions of the other agents (zeroed beyond the sensing radius).
 */
class SpreadToyEnv : public Environment
{
public:
  explicit SpreadToyEnv(const SpreadConfig & config);

  int n_agents() const override { return config_.n_agents; }
  int obs_dim() const override { return config_.obs_dim(); }
  int act_dim() const override { return 2; }

  JointObs reset(std::uint64_t seed) override;
  StepResult step(const JointAction & actions) override;
  bool done() const override { return t_ >= config_.t_max; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<SpreadToyEnv>(*this); }

  const SpreadConfig & config() const { return config_; }
  int time() const { return t_; }
  const std::vector<Vec2> & positions() const { return pos_; }
  const std::vector<Vec2> & velocities() const { return vel_; }
  const std::vector<Vec2> & landmarks() const { return landmarks_; }
  /// Places the state directly (time restarts at 0).
  void set_state(std::vector<Vec2> pos, std::vector<Vec2> vel, std::vector<Vec2> landmarks);

  JointObs observe() const;
  double reward() const;
  int collisions() const;

private:
  SpreadConfig config_;
  std::vector<Vec2> pos_;
  std::vector<Vec2> vel_;
  std::vector<Vec2> landmarks_;
  int t_ = 0;
};

enum class PolicyQuality { expert, medium, random };
PolicyQuality parse_quality(const std::string & s);
std::string to_string(PolicyQuality q);

struct ScriptedConfig
{
  double kp = 5.0;
  double kd = 3.0;
  double medium_noise = 0.5;
  bool greedy_assignment = false;  // required above 8 agents
};

/// Landmark index per agent minimising the summed distance (exhaustive up to 8 agents).
std::vector<int> assign_landmarks(
  const std::vector<Vec2> & agents, const std::vector<Vec2> & landmarks, bool greedy = false);

/// Scripted behaviour policy reading the privileged environment state.
class ScriptedPolicy
{
public:
  ScriptedPolicy(PolicyQuality quality, const ScriptedConfig & config = {});
  JointAction act(const SpreadToyEnv & env, Rng & rng) const;
  PolicyQuality quality() const { return quality_; }

private:
  PolicyQuality quality_;
  ScriptedConfig config_;
};

struct PolicyMix
{
  double expert = 1.0;
  double medium = 0.0;
  double random = 0.0;

  /// Episode counts per quality summing to `episodes`.
  std::array<int, 3> counts(int episodes) const;
  nlohmann::json to_json() const;
};

/// Rolls out the mix (expert block, then medium, then random) deterministically from `seed`.
data::Dataset generate_dataset(
  const SpreadConfig & env_config, const PolicyMix & mix, int episodes, std::uint64_t seed,
  const ScriptedConfig & scripted = {});

void generate_dataset_file(
  const SpreadConfig & env_config, const PolicyMix & mix, int episodes, std::uint64_t seed,
  const std::filesystem::path & path, const ScriptedConfig & scripted = {});

}  // namespace madiff::env

#endif  // MADIFF__TOY_ENVS_HPP_
