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

#ifndef MADIFF__DIFFUSION_SCHEDULE_HPP_
#define MADIFF__DIFFUSION_SCHEDULE_HPP_

#include "madiff/common.hpp"
#include "madiff/trajectory.hpp"

#include <string>
#include <vector>

namespace madiff::diffusion
{

enum class ScheduleKind { cosine, linear };
enum class SamplerKind { ancestral, ddim };

ScheduleKind parse_schedule_kind(const std::string & s);
std::string to_string(ScheduleKind kind);
SamplerKind parse_sampler_kind(const std::string & s);
std::string to_string(SamplerKind kind);

/**
 * Variance schedule for K diffusion steps. Vectors are indexed by k - 1 for
 * step k in [1, K]; alpha_bar_at(0) is 1 by convention.
 */
struct DiffusionSchedule
{
  int steps = 0;
  ScheduleKind kind = ScheduleKind::cosine;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double alpha_at(int k) const { return alpha[k - 1]; }
  double alpha_bar_at(int k) const { return k == 0 ? 1.0 : alpha_bar[k - 1]; }
  double sigma_at(int k) const { return sigma[k - 1]; }
};

struct SamplerParams
{
  double guidance_scale = 1.2;
  double temperature_scale = 0.5;
  SamplerKind sampler_kind = SamplerKind::ancestral;
  int ddim_steps = 15;
  bool clip_denoised = true;

  void validate(int schedule_steps) const;
};

DiffusionSchedule build_schedule(int steps, ScheduleKind kind = ScheduleKind::cosine);

/// sqrt(alpha_bar_k) * tau0 + sqrt(1 - alpha_bar_k) * eps.
JointTrajectory forward_noise(
  const JointTrajectory & tau0, int k, const JointTrajectory & eps, const DiffusionSchedule & sched);

/// (x_k - (1 - alpha_k) / sqrt(1 - alpha_bar_k) * eps_hat) / sqrt(alpha_k).
JointTrajectory posterior_mean(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched);

/**
 * Classifier-free guided noise eps_uncond + omega * (eps_cond - eps_uncond),
 * evaluated as (1 - omega) * eps_uncond + omega * eps_cond so that omega = 0
 * and omega = 1 reproduce the respective input bit-for-bit.
 */
JointTrajectory guided_epsilon(
  const JointTrajectory & eps_cond, const JointTrajectory & eps_uncond, double omega);

/// Entries ~ N(0, temperature_scale^2).
JointTrajectory sample_initial(
  int n_agents, int horizon, int obs_dim, double temperature_scale, Rng & rng);

/// Ancestral step; noise std is temperature_scale * sigma_k and is skipped at k = 1.
JointTrajectory denoise_step(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched, double temperature_scale, Rng & rng);

/// Deterministic (eta = 0) DDIM update from step k to k_prev (k_prev may be 0).
JointTrajectory ddim_step(
  const JointTrajectory & tau_k, int k, int k_prev, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched);

/**
 * Noise consistent with x_k and the clean estimate (x_k - sqrt(1 - alpha_bar_k) eps_hat) / sqrt(alpha_bar_k)
 * clipped to [-1, 1]. Feeding it to denoise_step or ddim_step yields the clipped-estimate update.
 */
JointTrajectory clip_epsilon(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat, const DiffusionSchedule & sched);

/// Strictly decreasing, uniformly spaced steps from K down to 1.
std::vector<int> ddim_timesteps(int steps, int n);

}  // namespace madiff::diffusion

#endif  // MADIFF__DIFFUSION_SCHEDULE_HPP_
