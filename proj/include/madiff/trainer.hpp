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

#ifndef MADIFF__TRAINER_HPP_
#define MADIFF__TRAINER_HPP_

#include "madiff/autograd.hpp"
#include "madiff/checkpoint.hpp"
#include "madiff/dataset.hpp"
#include "madiff/denoiser_net.hpp"
#include "madiff/diffusion_schedule.hpp"
#include "madiff/inverse_dynamics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace madiff::train
{

/// Which agents' history rows are known in training windows.
enum class ConditionMode { centralized, decentralized, mixed };
ConditionMode parse_condition_mode(const std::string & s);
std::string to_string(ConditionMode mode);

struct TrainConfig
{
  double learning_rate = 2e-4;
  int batch_size = 32;
  double cond_dropout = 0.25;
  int total_steps = 1000;
  int checkpoint_interval = 0;  // 0 keeps only the final checkpoint
  std::optional<double> ema_decay;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  int history = 0;   // C
  int horizon = 24;  // H
  int diffusion_steps = 200;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
  ConditionMode condition_mode = ConditionMode::mixed;
  data::ReturnOrigin return_origin = data::ReturnOrigin::window_start;
  std::optional<double> return_scale;
  std::optional<double> return_offset;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool train_bc = false;
  diffusion::SamplerParams sampler;
  int num_workers = 1;  // batch assembly threads; does not affect results

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json & j);
};

/// Noised training batch; the loss mask is in net::pack_batch layout.
struct DiffusionBatch
{
  std::vector<JointTrajectory> clean;
  std::vector<JointTrajectory> noise;
  std::vector<JointTrajectory> noisy;
  std::vector<Condition> conds;
  std::vector<int> steps;
  ag::Matrix loss_mask;
};

/**
 * Per sample, in order: k ~ U{1..K}, eps ~ N(0, I) (agent, time, feature
 * order), null-return draw ~ Bernoulli(dropout). Known rows of the noisy
 * trajectory are overwritten with the condition values and excluded from the loss.
 */
DiffusionBatch prepare_diffusion_batch(
  std::span<const JointTrajectory> windows, std::span<const Condition> conds,
  const diffusion::DiffusionSchedule & sched, double dropout, Rng & rng);

/// Mean squared noise error over the non-inpainted entries.
ag::Var diffusion_loss(ag::Tape & tape, const net::NoiseModel & model, const DiffusionBatch & batch);
double diffusion_loss(
  const net::NoiseModel & model, std::span<const JointTrajectory> windows, std::span<const Condition> conds,
  const diffusion::DiffusionSchedule & sched, double dropout, Rng & rng);

/// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(const ag::ParamStore & params, ag::ParamStore & shadow, double decay);

/// Adam over any number of parameter stores; state is keyed by store and name.
class Adam
{
public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update to every store and advances the step counter once.
  void step(std::span<ag::ParamStore * const> stores);
  int steps_taken() const { return t_; }

private:
  struct Moments
  {
    ag::Matrix m;
    ag::Matrix v;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::map<std::pair<const void *, std::string>, Moments> state_;
};

/// Uniform (episode, start) windows with the configured conditioning mode.
class WindowSampler
{
public:
  WindowSampler(
    const data::Dataset & dataset, const data::WindowSpec & spec, const data::NormStats & stats,
    ConditionMode mode);
  data::Window draw(Rng & rng) const;
  std::size_t size() const { return index_.size(); }

private:
  const data::Dataset & dataset_;
  data::WindowSpec spec_;
  data::NormStats stats_;
  ConditionMode mode_;
  std::vector<std::pair<int, int>> index_;
};

/// Transitions (o_t, a_t, o_{t+1}) at each window's current step for every agent.
std::vector<invdyn::Transition> window_transitions(std::span<const data::Window> windows, int history);

/// Normalization used for training: dataset-wide observation bounds, returns per config.
data::NormStats training_stats(const data::Dataset & dataset, const TrainConfig & config);

struct LossRow
{
  int step = 0;
  double diffusion_loss = 0.0;
  double id_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainOutputs
{
  std::optional<std::filesystem::path> out_dir;  // checkpoints and loss.csv
  std::function<void(const LossRow &)> on_step;
};

struct TrainResult
{
  Checkpoint checkpoint;
  std::vector<LossRow> log;
  std::vector<std::filesystem::path> checkpoint_paths;
};

TrainResult train(
  const data::Dataset & dataset, const TrainConfig & config, const net::NetConfig & net_config,
  const invdyn::InvDynConfig & invdyn_config, const TrainOutputs & outputs = {});

}  // namespace madiff::train

#endif  // MADIFF__TRAINER_HPP_
