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

#ifndef MADIFF__PREDICTOR_METRICS_HPP_
#define MADIFF__PREDICTOR_METRICS_HPP_

#include "madiff/dataset.hpp"
#include "madiff/denoiser_net.hpp"
#include "madiff/diffusion_schedule.hpp"
#include "madiff/planner.hpp"
#include "madiff/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace madiff::metrics
{

struct PredictionRequest
{
  JointTrajectory history;  // raw observations, N x C x obs_dim
  int horizon = 1;          // H
  int samples = 1;
};

/**
 * Samples joint futures conditioned on every agent's history. The model
 * window must equal C + H. Returns `samples` denormalized N x H x obs_dim futures.
 */
std::vector<JointTrajectory> predict(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, const data::NormStats & stats, const PredictionRequest & req,
  Rng & rng);

/// Displacement metrics use the first `pos_dims` features of each row as the position.
double ade(const JointTrajectory & pred, const JointTrajectory & truth, int pos_dims = 2);
double fde(const JointTrajectory & pred, const JointTrajectory & truth, int pos_dims = 2);
/// Minimum over the first k samples; per_agent takes each agent's best sample separately.
double min_ade(
  std::span<const JointTrajectory> preds, const JointTrajectory & truth, int k, bool per_agent = false,
  int pos_dims = 2);
double min_fde(
  std::span<const JointTrajectory> preds, const JointTrajectory & truth, int k, bool per_agent = false,
  int pos_dims = 2);

/// 100 (S - S_random) / (S_expert - S_random).
double normalized_score(double score, double expert, double random);

/**
 * Fraction of episodes whose per-agent plans agree: for every ordered pair
 * (i, j), agent i's final planned position for j lies within tol of agent
 * j's own final planned position. Each entry holds one plan per agent.
 */
double consistency_ratio(
  std::span<const std::vector<JointTrajectory>> episode_plans, double tol = 0.1, int pos_dims = 2);

/// Step-t plans of every logged episode long enough to have them.
std::vector<std::vector<JointTrajectory>> plans_at_step(const plan::RolloutReport & report, int t);

struct MetricRow
{
  std::string metric;
  std::string split;
  double value = 0.0;
  long long n = 0;
  std::uint64_t seed = 0;
};

void write_metrics_csv(const std::filesystem::path & path, std::span<const MetricRow> rows);

/// Truth as solid lines, predictions dashed, one colour per agent.
void write_trajectory_svg(
  const std::filesystem::path & path, const JointTrajectory & truth, std::span<const JointTrajectory> preds);

}  // namespace madiff::metrics

#endif  // MADIFF__PREDICTOR_METRICS_HPP_
