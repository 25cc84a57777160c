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

#include "madiff/diffusion_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace madiff::diffusion
{

namespace
{

constexpr double kCosineOffset = 0.008;
constexpr double kMinAlpha = 0.001;

void check_step(const DiffusionSchedule & sched, int k)
{
  require_arg(k >= 1 && k <= sched.steps, "diffusion step out of range");
}

void check_shape(const JointTrajectory & a, const JointTrajectory & b)
{
  require_arg(a.same_shape(b), "trajectory shape mismatch");
}

double cosine_f(double t, int steps)
{
  const double x = (t / steps + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0;
  const double c = std::cos(x);
  return c * c;
}

}  // namespace

ScheduleKind parse_schedule_kind(const std::string & s)
{
  if (s == "cosine") {
    return ScheduleKind::cosine;
  }
  if (s == "linear") {
    return ScheduleKind::linear;
  }
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind kind)
{
  return kind == ScheduleKind::cosine ? "cosine" : "linear";
}

SamplerKind parse_sampler_kind(const std::string & s)
{
  if (s == "ancestral") {
    return SamplerKind::ancestral;
  }
  if (s == "ddim") {
    return SamplerKind::ddim;
  }
  throw std::invalid_argument("unknown sampler kind: " + s);
}

std::string to_string(SamplerKind kind)
{
  return kind == SamplerKind::ancestral ? "ancestral" : "ddim";
}

void SamplerParams::validate(int schedule_steps) const
{
  require_arg(std::isfinite(guidance_scale) && guidance_scale >= 0.0, "guidance_scale must be >= 0");
  require_arg(
    temperature_scale >= 0.0 && temperature_scale < 1.0, "temperature_scale must lie in [0, 1)");
  require_arg(
    ddim_steps >= 1 && ddim_steps <= schedule_steps, "ddim_steps must lie in [1, K]");
}

DiffusionSchedule build_schedule(int steps, ScheduleKind kind)
{
  require_arg(steps >= 1, "build_schedule: K must be positive");
  DiffusionSchedule s;
  s.steps = steps;
  s.kind = kind;
  s.alpha.resize(steps);
  if (kind == ScheduleKind::cosine) {
    const double f0 = cosine_f(0.0, steps);
    double prev = 1.0;
    for (int k = 1; k <= steps; ++k) {
      const double bar = cosine_f(k, steps) / f0;
      s.alpha[k - 1] = std::clamp(bar / prev, kMinAlpha, 1.0 - 1e-12);
      prev = bar;
    }
  } else {
    // Linear beta ramp, rescaled so short chains still reach a near-zero alpha_bar.
    const double scale = 1000.0 / steps;
    const double beta_start = std::min(1e-4 * scale, 0.5);
    const double beta_end = std::min(0.02 * scale, 1.0 - kMinAlpha);
    for (int k = 1; k <= steps; ++k) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(k - 1) / (steps - 1);
      s.alpha[k - 1] = 1.0 - (beta_start + frac * (beta_end - beta_start));
    }
  }
  s.alpha_bar.resize(steps);
  s.sigma.resize(steps);
  double bar = 1.0;
  for (int k = 0; k < steps; ++k) {
    bar *= s.alpha[k];
    s.alpha_bar[k] = bar;
    s.sigma[k] = std::sqrt(1.0 - s.alpha[k]);
  }
  return s;
}

JointTrajectory forward_noise(
  const JointTrajectory & tau0, int k, const JointTrajectory & eps, const DiffusionSchedule & sched)
{
  check_shape(tau0, eps);
  check_step(sched, k);
  const double a = std::sqrt(sched.alpha_bar_at(k));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(k));
  JointTrajectory out = tau0;
  auto o = out.values();
  auto e = eps.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = a * o[i] + b * e[i];
  }
  return out;
}

JointTrajectory posterior_mean(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched)
{
  check_shape(tau_k, eps_hat);
  check_step(sched, k);
  const double alpha = sched.alpha_at(k);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar_at(k));
  JointTrajectory out = tau_k;
  auto o = out.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = inv_sqrt_alpha * (o[i] - coef * e[i]);
  }
  return out;
}

JointTrajectory guided_epsilon(
  const JointTrajectory & eps_cond, const JointTrajectory & eps_uncond, double omega)
{
  check_shape(eps_cond, eps_uncond);
  JointTrajectory out = eps_uncond;
  auto o = out.values();
  auto c = eps_cond.values();
  const double keep = 1.0 - omega;
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = keep * o[i] + omega * c[i];
  }
  return out;
}

JointTrajectory sample_initial(
  int n_agents, int horizon, int obs_dim, double temperature_scale, Rng & rng)
{
  require_arg(
    temperature_scale >= 0.0 && temperature_scale < 1.0, "temperature_scale must lie in [0, 1)");
  JointTrajectory out(n_agents, horizon, obs_dim);
  fill_normal(out.values(), rng, 1.0);
  for (double & v : out.values()) {
    v = temperature_scale == 0.0 ? 0.0 : temperature_scale * v;
  }
  return out;
}

JointTrajectory denoise_step(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched, double temperature_scale, Rng & rng)
{
  check_step(sched, k);
  JointTrajectory out = posterior_mean(tau_k, k, eps_hat, sched);
  if (k > 1 && temperature_scale > 0.0) {
    const double sd = temperature_scale * sched.sigma_at(k);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double & v : out.values()) {
      v += sd * dist(rng);
    }
  }
  return out;
}

JointTrajectory ddim_step(
  const JointTrajectory & tau_k, int k, int k_prev, const JointTrajectory & eps_hat,
  const DiffusionSchedule & sched)
{
  check_shape(tau_k, eps_hat);
  check_step(sched, k);
  require_arg(k_prev >= 0 && k_prev < k, "ddim_step: k_prev must lie in [0, k)");
  const double ab = sched.alpha_bar_at(k);
  const double ab_prev = sched.alpha_bar_at(k_prev);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double sqrt_1mab_prev = std::sqrt(1.0 - ab_prev);
  JointTrajectory out = tau_k;
  auto o = out.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0 = (o[i] - sqrt_1mab * e[i]) / sqrt_ab;
    o[i] = sqrt_ab_prev * x0 + sqrt_1mab_prev * e[i];
  }
  return out;
}

JointTrajectory clip_epsilon(
  const JointTrajectory & tau_k, int k, const JointTrajectory & eps_hat, const DiffusionSchedule & sched)
{
  check_shape(tau_k, eps_hat);
  check_step(sched, k);
  const double sqrt_ab = std::sqrt(sched.alpha_bar_at(k));
  const double sqrt_1mab = std::sqrt(1.0 - sched.alpha_bar_at(k));
  JointTrajectory out = eps_hat;
  auto o = out.values();
  auto x = tau_k.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0 = (x[i] - sqrt_1mab * o[i]) / sqrt_ab;
    const double clipped = std::clamp(x0, -1.0, 1.0);
    if (clipped != x0) {
      o[i] = (x[i] - sqrt_ab * clipped) / sqrt_1mab;
    }
  }
  return out;
}

std::vector<int> ddim_timesteps(int steps, int n)
{
  require_arg(steps >= 1 && n >= 1 && n <= steps, "ddim_timesteps: need 1 <= n <= K");
  std::vector<int> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = steps;
    return out;
  }
  for (int i = 0; i < n; ++i) {
    const double x = steps - static_cast<double>(steps - 1) * i / (n - 1);
    out[i] = static_cast<int>(std::lround(x));
  }
  return out;
}

}  // namespace madiff::diffusion
