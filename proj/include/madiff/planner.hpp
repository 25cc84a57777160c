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

#ifndef MADIFF__PLANNER_HPP_
#define MADIFF__PLANNER_HPP_

#include "madiff/checkpoint.hpp"
#include "madiff/common.hpp"
#include "madiff/dataset.hpp"
#include "madiff/denoiser_net.hpp"
#include "madiff/diffusion_schedule.hpp"
#include "madiff/inverse_dynamics.hpp"
#include "madiff/toy_envs.hpp"
#include "madiff/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace madiff::plan
{

enum class ExecMode { centralized, decentralized };
ExecMode parse_exec_mode(const std::string & s);
std::string to_string(ExecMode mode);

/// The most recent `capacity` joint observations, oldest first.
class HistoryBuffer
{
public:
  explicit HistoryBuffer(int capacity = 0);

  void push(const env::JointObs & obs);
  void clear() { items_.clear(); }
  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(items_.size()); }
  const env::JointObs & at(int i) const { return items_[static_cast<std::size_t>(i)]; }

private:
  int capacity_;
  std::deque<env::JointObs> items_;
};

struct PlanConfig
{
  ExecMode mode = ExecMode::decentralized;
  int horizon = 24;  // H
  int history = 0;   // C
  diffusion::SamplerParams sampler;
  /// Target return in raw reward units; normalized with the checkpoint stats.
  double target_return = 0.0;
  int replan_every = 1;

  void validate(int schedule_steps) const;
  nlohmann::json to_json() const;
  static PlanConfig from_json(const nlohmann::json & j);
};

/// Overwrites known rows with the condition's values; all other entries untouched.
JointTrajectory condition_inpaint(const JointTrajectory & tau, const Condition & cond);

/**
 * Runs one guided reverse chain per condition, batched through the model.
 * Chain i draws all its noise from rngs[i]; the conditional and null passes
 * are separate model calls. Throws runtime_error on non-finite values.
 */
std::vector<JointTrajectory> sample_plans(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, std::span<const Condition> conds, std::span<Rng> rngs);

JointTrajectory sample_plan(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, const Condition & cond, Rng & rng);

/// Per-environment planner state.
struct AgentState
{
  HistoryBuffer history{0};
  std::vector<JointTrajectory> cached_plans;
  int steps_since_plan = 0;
};

struct ActResult
{
  env::JointAction actions;
  /// One joint plan (centralized) or one per agent viewpoint (decentralized), normalized.
  std::vector<JointTrajectory> plans;
  bool replanned = true;
};

/// Anything that maps joint observations of several lockstep environments to joint actions.
class Controller
{
public:
  virtual ~Controller() = default;
  virtual AgentState initial_state() const { return AgentState{}; }
  virtual std::vector<ActResult> act_batch(
    std::span<const env::JointObs> obs, std::span<AgentState> states, std::span<Rng> rngs) const = 0;
};

/// Diffusion planner with inverse-dynamics action decoding.
class DiffusionPlanner : public Controller
{
public:
  DiffusionPlanner(
    const net::NoiseModel & model, const invdyn::InverseDynamics & inverse_dynamics,
    const data::NormStats & stats, diffusion::DiffusionSchedule sched, PlanConfig config, int n_agents,
    int obs_dim);

  const PlanConfig & config() const { return config_; }
  AgentState initial_state() const override;

  /// Joint (agent < 0) or single-agent condition built from the history and current observation.
  Condition make_condition(const env::JointObs & obs, const HistoryBuffer & history, int agent) const;

  ActResult act(const env::JointObs & obs, AgentState & state, Rng & rng) const;
  std::vector<ActResult> act_batch(
    std::span<const env::JointObs> obs, std::span<AgentState> states, std::span<Rng> rngs) const override;

private:
  const net::NoiseModel & model_;
  const invdyn::InverseDynamics & id_;
  data::NormStats stats_;
  diffusion::DiffusionSchedule sched_;
  PlanConfig config_;
  int n_agents_;
  int obs_dim_;
};

/// One-step policy: an o -> o' network followed by inverse dynamics.
class NextObsPolicy : public Controller
{
public:
  NextObsPolicy(
    const invdyn::InverseDynamics & next_obs_net, const invdyn::InverseDynamics & inverse_dynamics,
    const data::NormStats & stats);

  std::vector<ActResult> act_batch(
    std::span<const env::JointObs> obs, std::span<AgentState> states, std::span<Rng> rngs) const override;

private:
  const invdyn::InverseDynamics & bc_;
  const invdyn::InverseDynamics & id_;
  data::NormStats stats_;
};

struct EpisodeRecord
{
  std::uint64_t seed = 0;
  double total_return = 0.0;
  int length = 0;
  /// Logged plans keyed by environment step.
  std::map<int, std::vector<JointTrajectory>> plans;
  double wall_ms = 0.0;
};

struct RolloutOptions
{
  bool log_plans = false;
  /// Steps whose plans are logged; empty logs every step.
  std::vector<int> plan_steps;
  int batch = 100;  // environments advanced in lockstep
  int max_steps = 0;  // 0 means run to termination
};

struct RolloutReport
{
  std::vector<EpisodeRecord> episodes;
  double wall_ms = 0.0;

  double mean_return() const;
  /// Deterministic part: returns, seeds, optional plans, and `config` echoed.
  nlohmann::json to_json(const nlohmann::json & config, bool include_plans) const;
  /// Wall-clock timings, kept apart so reports stay reproducible.
  nlohmann::json timings_json() const;
};

/// Episode e resets with derive_seed(seed, 2e) and plans with derive_seed(seed, 2e + 1).
RolloutReport rollout(
  const env::Environment & prototype, const Controller & controller, int episodes, std::uint64_t seed,
  const RolloutOptions & options = {});

/// Owns the networks from a checkpoint so planners can reference them.
struct LoadedModel
{
  explicit LoadedModel(const Checkpoint & ckpt);

  net::Denoiser denoiser;
  invdyn::InverseDynamics inverse_dynamics;
  std::optional<invdyn::InverseDynamics> bc;
  data::NormStats stats;
  nlohmann::json train;
};

}  // namespace madiff::plan

#endif  // MADIFF__PLANNER_HPP_
