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

#include "madiff/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace madiff::plan
{

namespace
{

double elapsed_ms(std::chrono::steady_clock::time_point start)
{
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> normalized_row(const std::vector<double> & raw, const data::NormStats & stats, int agent)
{
  return data::normalize_obs(raw, stats, agent);
}

}  // namespace

ExecMode parse_exec_mode(const std::string & s)
{
  if (s == "centralized") {
    return ExecMode::centralized;
  }
  if (s == "decentralized") {
    return ExecMode::decentralized;
  }
  throw std::invalid_argument("unknown execution mode '" + s + "'");
}

std::string to_string(ExecMode mode)
{
  return mode == ExecMode::centralized ? "centralized" : "decentralized";
}

HistoryBuffer::HistoryBuffer(int capacity) : capacity_(capacity)
{
  require_arg(capacity >= 0, "history capacity must be >= 0");
}

void HistoryBuffer::push(const env::JointObs & obs)
{
  if (capacity_ == 0) {
    return;
  }
  if (static_cast<int>(items_.size()) == capacity_) {
    items_.pop_front();
  }
  items_.push_back(obs);
}

void PlanConfig::validate(int schedule_steps) const
{
  require_arg(horizon >= 2, "plan.horizon must be >= 2");
  require_arg(history >= 0, "plan.history must be >= 0");
  require_arg(replan_every >= 1 && replan_every <= horizon - 1, "plan.replan_every must lie in [1, horizon - 1]");
  require_arg(std::isfinite(target_return), "plan.target_return must be finite");
  sampler.validate(schedule_steps);
}

nlohmann::json PlanConfig::to_json() const
{
  return {
    {"mode", to_string(mode)},
    {"horizon", horizon},
    {"history", history},
    {"target_return", target_return},
    {"replan_every", replan_every},
    {"guidance_scale", sampler.guidance_scale},
    {"temperature_scale", sampler.temperature_scale},
    {"sampler_kind", diffusion::to_string(sampler.sampler_kind)},
    {"ddim_steps", sampler.ddim_steps},
    {"clip_denoised", sampler.clip_denoised}};
}

PlanConfig PlanConfig::from_json(const nlohmann::json & j)
{
  PlanConfig c;
  c.mode = parse_exec_mode(j.value("mode", std::string("decentralized")));
  c.horizon = j.value("horizon", c.horizon);
  c.history = j.value("history", c.history);
  c.target_return = j.value("target_return", c.target_return);
  c.replan_every = j.value("replan_every", c.replan_every);
  c.sampler.guidance_scale = j.value("guidance_scale", c.sampler.guidance_scale);
  c.sampler.temperature_scale = j.value("temperature_scale", c.sampler.temperature_scale);
  c.sampler.sampler_kind = diffusion::parse_sampler_kind(j.value("sampler_kind", std::string("ancestral")));
  c.sampler.ddim_steps = j.value("ddim_steps", c.sampler.ddim_steps);
  c.sampler.clip_denoised = j.value("clip_denoised", c.sampler.clip_denoised);
  return c;
}

JointTrajectory condition_inpaint(const JointTrajectory & tau, const Condition & cond)
{
  cond.validate(tau.n_agents(), tau.horizon(), tau.obs_dim());
  JointTrajectory out = tau;
  for (int a = 0; a < tau.n_agents(); ++a) {
    for (int t = 0; t < tau.horizon(); ++t) {
      if (cond.known(a, t)) {
        const auto src = cond.known_values.row(a, t);
        std::copy(src.begin(), src.end(), out.row(a, t).begin());
      }
    }
  }
  return out;
}

std::vector<JointTrajectory> sample_plans(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, std::span<const Condition> conds, std::span<Rng> rngs)
{
  sampler.validate(sched.steps);
  require_arg(conds.size() == rngs.size(), "sample_plans: one random source per chain required");
  if (conds.empty()) {
    return {};
  }
  const int n = conds.front().known_values.n_agents();
  const int len = conds.front().known_values.horizon();
  const int d = conds.front().known_values.obs_dim();
  const std::size_t S = conds.size();

  std::vector<Condition> null_conds;
  null_conds.reserve(S);
  for (const Condition & c : conds) {
    c.validate(n, len, d);
    null_conds.push_back(c.as_null());
  }

  std::vector<int> ks;
  if (sampler.sampler_kind == diffusion::SamplerKind::ddim) {
    ks = diffusion::ddim_timesteps(sched.steps, sampler.ddim_steps);
  } else {
    for (int k = sched.steps; k >= 1; --k) {
      ks.push_back(k);
    }
  }

  std::vector<JointTrajectory> x;
  x.reserve(S);
  for (std::size_t i = 0; i < S; ++i) {
    x.push_back(diffusion::sample_initial(n, len, d, sampler.temperature_scale, rngs[i]));
  }
  for (std::size_t step = 0; step < ks.size(); ++step) {
    const int k = ks[step];
    for (std::size_t i = 0; i < S; ++i) {
      x[i] = condition_inpaint(x[i], conds[i]);
    }
    const std::vector<int> steps(S, k);
    const auto eps_cond = model.predict(x, conds, steps);
    const auto eps_null = model.predict(x, null_conds, steps);
    for (std::size_t i = 0; i < S; ++i) {
      auto eps = diffusion::guided_epsilon(eps_cond[i], eps_null[i], sampler.guidance_scale);
      if (sampler.clip_denoised) {
        eps = diffusion::clip_epsilon(x[i], k, eps, sched);
      }
      if (sampler.sampler_kind == diffusion::SamplerKind::ddim) {
        const int k_prev = step + 1 < ks.size() ? ks[step + 1] : 0;
        x[i] = diffusion::ddim_step(x[i], k, k_prev, eps, sched);
      } else {
        x[i] = diffusion::denoise_step(x[i], k, eps, sched, sampler.temperature_scale, rngs[i]);
      }
      for (double v : x[i].values()) {
        if (!std::isfinite(v)) {
          throw std::runtime_error(
            "non-finite value in reverse chain at diffusion step k=" + std::to_string(k));
        }
      }
    }
  }
  for (std::size_t i = 0; i < S; ++i) {
    for (double & v : x[i].values()) {
      v = std::clamp(v, -1.0, 1.0);
    }
    x[i] = condition_inpaint(x[i], conds[i]);
  }
  return x;
}

JointTrajectory sample_plan(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, const Condition & cond, Rng & rng)
{
  return sample_plans(model, sched, sampler, std::span<const Condition>(&cond, 1), std::span<Rng>(&rng, 1))
    .front();
}

DiffusionPlanner::DiffusionPlanner(
  const net::NoiseModel & model, const invdyn::InverseDynamics & inverse_dynamics,
  const data::NormStats & stats, diffusion::DiffusionSchedule sched, PlanConfig config, int n_agents,
  int obs_dim)
: model_(model),
  id_(inverse_dynamics),
  stats_(stats),
  sched_(std::move(sched)),
  config_(config),
  n_agents_(n_agents),
  obs_dim_(obs_dim)
{
  config_.validate(sched_.steps);
  stats_.validate();
  require_arg(n_agents >= 1 && obs_dim >= 1, "planner: dimensions must be positive");
  require_arg(inverse_dynamics.config().obs_dim == obs_dim, "planner: inverse dynamics width mismatch");
}

AgentState DiffusionPlanner::initial_state() const
{
  AgentState s;
  s.history = HistoryBuffer(config_.history);
  return s;
}

Condition DiffusionPlanner::make_condition(const env::JointObs & obs, const HistoryBuffer & history, int agent) const
{
  require_arg(static_cast<int>(obs.size()) == n_agents_, "planner: expected one observation per agent");
  const int C = config_.history;
  const int len = C + config_.horizon;
  Condition cond = Condition::empty(n_agents_, len, obs_dim_);
  for (int p = 0; p <= C; ++p) {
    const int missing = C - history.size();
    const env::JointObs * src = &obs;
    if (p < C) {
      if (history.size() == 0) {
        src = &obs;
      } else {
        src = &history.at(std::max(0, p - missing));
      }
    }
    for (int i = 0; i < n_agents_; ++i) {
      if (agent >= 0 && i != agent) {
        continue;
      }
      require_arg(
        static_cast<int>((*src)[i].size()) == obs_dim_, "planner: observation width does not match the model");
      const auto row = normalized_row((*src)[i], stats_, i);
      std::copy(row.begin(), row.end(), cond.known_values.row(i, p).begin());
      cond.set_known(i, p, true);
    }
  }
  cond.return_values = {data::normalize_return(config_.target_return, stats_)};
  return cond;
}

ActResult DiffusionPlanner::act(const env::JointObs & obs, AgentState & state, Rng & rng) const
{
  return act_batch(std::span<const env::JointObs>(&obs, 1), std::span<AgentState>(&state, 1), std::span<Rng>(&rng, 1))
    .front();
}

std::vector<ActResult> DiffusionPlanner::act_batch(
  std::span<const env::JointObs> obs, std::span<AgentState> states, std::span<Rng> rngs) const
{
  require_arg(obs.size() == states.size() && obs.size() == rngs.size(), "act_batch: batch sizes differ");
  const std::size_t B = obs.size();
  const int chains_per_env = config_.mode == ExecMode::centralized ? 1 : n_agents_;

  std::vector<Condition> conds;
  std::vector<Rng> chain_rngs;
  std::vector<std::size_t> owners;
  std::vector<bool> replan(B, false);
  for (std::size_t b = 0; b < B; ++b) {
    AgentState & st = states[b];
    replan[b] = st.cached_plans.empty() || st.steps_since_plan >= config_.replan_every;
    if (!replan[b]) {
      continue;
    }
    for (int c = 0; c < chains_per_env; ++c) {
      const int agent = config_.mode == ExecMode::centralized ? -1 : c;
      conds.push_back(make_condition(obs[b], st.history, agent));
      chain_rngs.emplace_back(rngs[b]());
      owners.push_back(b);
    }
  }
  const auto plans = sample_plans(model_, sched_, config_.sampler, conds, chain_rngs);
  for (std::size_t b = 0; b < B; ++b) {
    if (replan[b]) {
      states[b].cached_plans.clear();
      states[b].steps_since_plan = 0;
    }
  }
  for (std::size_t i = 0; i < plans.size(); ++i) {
    states[owners[i]].cached_plans.push_back(plans[i]);
  }

  std::vector<ActResult> out(B);
  const int C = config_.history;
  for (std::size_t b = 0; b < B; ++b) {
    AgentState & st = states[b];
    const int j = st.steps_since_plan;
    out[b].replanned = replan[b];
    out[b].plans = st.cached_plans;
    out[b].actions.resize(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i) {
      const JointTrajectory & p = st.cached_plans[config_.mode == ExecMode::centralized ? 0 : i];
      const auto current = normalized_row(obs[b][i], stats_, i);
      const auto next = p.row(i, C + j + 1);
      out[b].actions[i] = id_.predict_action(current, next, i);
    }
    st.history.push(obs[b]);
    ++st.steps_since_plan;
  }
  return out;
}

NextObsPolicy::NextObsPolicy(
  const invdyn::InverseDynamics & next_obs_net, const invdyn::InverseDynamics & inverse_dynamics,
  const data::NormStats & stats)
: bc_(next_obs_net), id_(inverse_dynamics), stats_(stats)
{
  require_arg(
    next_obs_net.config().input_dim() == next_obs_net.config().obs_dim &&
      next_obs_net.config().act_dim == next_obs_net.config().obs_dim,
    "next-observation policy: network must map obs_dim -> obs_dim");
}

std::vector<ActResult> NextObsPolicy::act_batch(
  std::span<const env::JointObs> obs, std::span<AgentState> states, std::span<Rng> rngs) const
{
  require_arg(obs.size() == states.size() && obs.size() == rngs.size(), "act_batch: batch sizes differ");
  std::vector<ActResult> out(obs.size());
  for (std::size_t b = 0; b < obs.size(); ++b) {
    out[b].actions.resize(obs[b].size());
    for (std::size_t i = 0; i < obs[b].size(); ++i) {
      const int agent = static_cast<int>(i);
      const auto current = normalized_row(obs[b][i], stats_, agent);
      auto next = bc_.predict_action(current, {}, agent);
      for (double & v : next) {
        v = std::clamp(v, -1.0, 1.0);
      }
      out[b].actions[i] = id_.predict_action(current, next, agent);
    }
  }
  return out;
}

double RolloutReport::mean_return() const
{
  if (episodes.empty()) {
    return 0.0;
  }
  double s = 0.0;
  for (const auto & e : episodes) {
    s += e.total_return;
  }
  return s / static_cast<double>(episodes.size());
}

nlohmann::json RolloutReport::to_json(const nlohmann::json & config, bool include_plans) const
{
  nlohmann::json eps = nlohmann::json::array();
  for (const auto & e : episodes) {
    nlohmann::json je = {{"seed", e.seed}, {"return", e.total_return}, {"length", e.length}};
    if (include_plans) {
      nlohmann::json steps = nlohmann::json::array();
      for (const auto & [t, step_plans] : e.plans) {
        nlohmann::json ps = nlohmann::json::array();
        for (const auto & p : step_plans) {
          ps.push_back(
            {{"shape", {p.n_agents(), p.horizon(), p.obs_dim()}},
             {"values", std::vector<double>(p.values().begin(), p.values().end())}});
        }
        steps.push_back({{"t", t}, {"plans", std::move(ps)}});
      }
      je["plans"] = std::move(steps);
    }
    eps.push_back(std::move(je));
  }
  return {
    {"config", config}, {"episodes", eps}, {"n_episodes", episodes.size()}, {"mean_return", mean_return()}};
}

nlohmann::json RolloutReport::timings_json() const
{
  nlohmann::json per = nlohmann::json::array();
  for (const auto & e : episodes) {
    per.push_back(e.wall_ms);
  }
  return {{"total_wall_ms", wall_ms}, {"episode_wall_ms", per}};
}

RolloutReport rollout(
  const env::Environment & prototype, const Controller & controller, int episodes, std::uint64_t seed,
  const RolloutOptions & options)
{
  require_arg(episodes >= 0, "rollout: episode count must be >= 0");
  require_arg(options.batch >= 1, "rollout: batch must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  RolloutReport report;
  report.episodes.resize(static_cast<std::size_t>(episodes));
  for (int first = 0; first < episodes; first += options.batch) {
    const auto chunk_start = std::chrono::steady_clock::now();
    const int count = std::min(options.batch, episodes - first);
    std::vector<std::unique_ptr<env::Environment>> envs;
    std::vector<env::JointObs> obs;
    std::vector<AgentState> states;
    std::vector<Rng> rngs;
    for (int c = 0; c < count; ++c) {
      const auto e = static_cast<std::uint64_t>(first + c);
      envs.push_back(prototype.clone());
      report.episodes[first + c].seed = derive_seed(seed, 2 * e);
      obs.push_back(envs.back()->reset(report.episodes[first + c].seed));
      states.push_back(controller.initial_state());
      rngs.emplace_back(derive_seed(seed, 2 * e + 1));
    }
    std::vector<int> active(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
      active[c] = c;
    }
    int t = 0;
    while (!active.empty() && (options.max_steps == 0 || t < options.max_steps)) {
      std::vector<env::JointObs> a_obs;
      std::vector<AgentState> a_states;
      std::vector<Rng> a_rngs;
      for (int c : active) {
        a_obs.push_back(obs[c]);
        a_states.push_back(std::move(states[c]));
        a_rngs.push_back(rngs[c]);
      }
      const auto results = controller.act_batch(a_obs, a_states, a_rngs);
      std::vector<int> still;
      for (std::size_t i = 0; i < active.size(); ++i) {
        const int c = active[i];
        states[c] = std::move(a_states[i]);
        rngs[c] = a_rngs[i];
        EpisodeRecord & rec = report.episodes[first + c];
        if (
          options.log_plans && (options.plan_steps.empty() ||
                                std::find(options.plan_steps.begin(), options.plan_steps.end(), t) !=
                                  options.plan_steps.end())) {
          rec.plans[t] = results[i].plans;
        }
        const env::StepResult r = envs[c]->step(results[i].actions);
        rec.total_return += r.reward;
        ++rec.length;
        obs[c] = r.obs;
        if (!r.done) {
          still.push_back(c);
        }
      }
      active = std::move(still);
      ++t;
    }
    const double chunk_ms = elapsed_ms(chunk_start);
    for (int c = 0; c < count; ++c) {
      report.episodes[first + c].wall_ms = chunk_ms / count;
    }
  }
  report.wall_ms = elapsed_ms(start);
  return report;
}

LoadedModel::LoadedModel(const Checkpoint & ckpt)
: denoiser(ckpt.net, ckpt.denoiser),
  inverse_dynamics(ckpt.invdyn, ckpt.invdyn_params),
  stats(ckpt.stats),
  train(ckpt.train)
{
  if (ckpt.bc) {
    bc.emplace(*ckpt.bc, ckpt.bc_params);
  }
}

}  // namespace madiff::plan
