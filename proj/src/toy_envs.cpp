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

#include "madiff/toy_envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace madiff::env
{

namespace
{

double dist(const Vec2 & a, const Vec2 & b)
{
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

void SpreadConfig::validate() const
{
  require_arg(n_agents >= 1, "env.n_agents must be positive");
  require_arg(sensing_radius > 0.0, "env.sensing_radius must be positive");
  require_arg(collision_penalty >= 0.0, "env.collision_penalty must be >= 0");
  require_arg(collision_radius >= 0.0, "env.collision_radius must be >= 0");
  require_arg(dt > 0.0, "env.dt must be positive");
  require_arg(t_max >= 1, "env.t_max must be positive");
  require_arg(max_speed > 0.0, "env.max_speed must be positive");
}

nlohmann::json SpreadConfig::to_json() const
{
  nlohmann::json j = {
    {"n_agents", n_agents},
    {"collision_penalty", collision_penalty},
    {"collision_radius", collision_radius},
    {"dt", dt},
    {"t_max", t_max},
    {"max_speed", max_speed},
    {"seed", seed}};
  // JSON has no infinity; null stands for unbounded sensing.
  j["sensing_radius"] = std::isfinite(sensing_radius) ? nlohmann::json(sensing_radius) : nlohmann::json();
  return j;
}

SpreadConfig SpreadConfig::from_json(const nlohmann::json & j)
{
  SpreadConfig c;
  c.n_agents = j.value("n_agents", c.n_agents);
  if (j.contains("sensing_radius") && !j.at("sensing_radius").is_null()) {
    c.sensing_radius = j.at("sensing_radius").get<double>();
  }
  c.collision_penalty = j.value("collision_penalty", c.collision_penalty);
  c.collision_radius = j.value("collision_radius", c.collision_radius);
  c.dt = j.value("dt", c.dt);
  c.t_max = j.value("t_max", c.t_max);
  c.max_speed = j.value("max_speed", c.max_speed);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

SpreadToyEnv::SpreadToyEnv(const SpreadConfig & config) : config_(config)
{
  config_.validate();
  reset(config_.seed);
}

JointObs SpreadToyEnv::reset(std::uint64_t seed)
{
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto n = static_cast<std::size_t>(config_.n_agents);
  pos_.assign(n, {});
  vel_.assign(n, {0.0, 0.0});
  landmarks_.assign(n, {});
  for (auto & p : pos_) {
    p[0] = u(rng);
    p[1] = u(rng);
  }
  for (auto & l : landmarks_) {
    l[0] = u(rng);
    l[1] = u(rng);
  }
  t_ = 0;
  return observe();
}

void SpreadToyEnv::set_state(std::vector<Vec2> pos, std::vector<Vec2> vel, std::vector<Vec2> landmarks)
{
  const auto n = static_cast<std::size_t>(config_.n_agents);
  require_arg(
    pos.size() == n && vel.size() == n && landmarks.size() == n, "set_state: expected one entry per agent");
  pos_ = std::move(pos);
  vel_ = std::move(vel);
  landmarks_ = std::move(landmarks);
  t_ = 0;
}

JointObs SpreadToyEnv::observe() const
{
  const int n = config_.n_agents;
  JointObs obs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto & o = obs[i];
    o.reserve(static_cast<std::size_t>(obs_dim()));
    o.insert(o.end(), {pos_[i][0], pos_[i][1], vel_[i][0], vel_[i][1]});
    for (const Vec2 & l : landmarks_) {
      o.push_back(l[0] - pos_[i][0]);
      o.push_back(l[1] - pos_[i][1]);
    }
    for (int j = 0; j < n; ++j) {
      if (j == i) {
        continue;
      }
      const bool seen = dist(pos_[i], pos_[j]) <= config_.sensing_radius;
      o.push_back(seen ? pos_[j][0] - pos_[i][0] : 0.0);
      o.push_back(seen ? pos_[j][1] - pos_[i][1] : 0.0);
    }
  }
  return obs;
}

int SpreadToyEnv::collisions() const
{
  int count = 0;
  for (std::size_t i = 0; i < pos_.size(); ++i) {
    for (std::size_t j = i + 1; j < pos_.size(); ++j) {
      if (dist(pos_[i], pos_[j]) < config_.collision_radius) {
        ++count;
      }
    }
  }
  return count;
}

double SpreadToyEnv::reward() const
{
  double cover = 0.0;
  for (const Vec2 & l : landmarks_) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2 & p : pos_) {
      best = std::min(best, dist(l, p));
    }
    cover += best;
  }
  return -cover - config_.collision_penalty * collisions();
}

StepResult SpreadToyEnv::step(const JointAction & actions)
{
  if (done()) {
    throw InvalidState("SpreadToyEnv::step called after the episode ended");
  }
  require_arg(actions.size() == pos_.size(), "step: expected one action per agent");
  for (std::size_t i = 0; i < pos_.size(); ++i) {
    require_arg(actions[i].size() == 2, "step: actions are 2-D accelerations");
    Vec2 a{};
    for (int k = 0; k < 2; ++k) {
      require_arg(std::isfinite(actions[i][k]), "step: non-finite action");
      a[k] = std::clamp(actions[i][k], -1.0, 1.0);
    }
    for (int k = 0; k < 2; ++k) {
      pos_[i][k] += vel_[i][k] * config_.dt;
      vel_[i][k] += a[k] * config_.dt;
    }
    const double speed = std::hypot(vel_[i][0], vel_[i][1]);
    if (speed > config_.max_speed) {
      vel_[i][0] *= config_.max_speed / speed;
      vel_[i][1] *= config_.max_speed / speed;
    }
  }
  ++t_;
  return {observe(), reward(), done()};
}

PolicyQuality parse_quality(const std::string & s)
{
  if (s == "expert") {
    return PolicyQuality::expert;
  }
  if (s == "medium") {
    return PolicyQuality::medium;
  }
  if (s == "random") {
    return PolicyQuality::random;
  }
  throw std::invalid_argument("unknown policy quality '" + s + "'");
}

std::string to_string(PolicyQuality q)
{
  switch (q) {
    case PolicyQuality::expert:
      return "expert";
    case PolicyQuality::medium:
      return "medium";
    case PolicyQuality::random:
      return "random";
  }
  return "unknown";
}

std::vector<int> assign_landmarks(
  const std::vector<Vec2> & agents, const std::vector<Vec2> & landmarks, bool greedy)
{
  const std::size_t n = agents.size();
  require_arg(landmarks.size() == n, "assign_landmarks: needs one landmark per agent");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  if (!greedy) {
    require_arg(n <= 8, "assign_landmarks: exhaustive assignment supports at most 8 agents");
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cost += dist(agents[i], landmarks[perm[i]]);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  // Repeatedly commit the globally closest free (agent, landmark) pair.
  std::vector<int> out(n, -1);
  std::vector<bool> taken(n, false);
  for (std::size_t round = 0; round < n; ++round) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    std::size_t bl = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] >= 0) {
        continue;
      }
      for (std::size_t l = 0; l < n; ++l) {
        if (!taken[l] && dist(agents[i], landmarks[l]) < best) {
          best = dist(agents[i], landmarks[l]);
          bi = i;
          bl = l;
        }
      }
    }
    out[bi] = static_cast<int>(bl);
    taken[bl] = true;
  }
  return out;
}

ScriptedPolicy::ScriptedPolicy(PolicyQuality quality, const ScriptedConfig & config)
: quality_(quality), config_(config)
{
}

JointAction ScriptedPolicy::act(const SpreadToyEnv & env, Rng & rng) const
{
  const int n = env.n_agents();
  JointAction out(static_cast<std::size_t>(n), std::vector<double>(2, 0.0));
  if (quality_ == PolicyQuality::random) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto & a : out) {
      a[0] = u(rng);
      a[1] = u(rng);
    }
    return out;
  }
  const auto target = assign_landmarks(env.positions(), env.landmarks(), config_.greedy_assignment);
  std::normal_distribution<double> noise(0.0, config_.medium_noise);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double e =
        config_.kp * (env.landmarks()[target[i]][k] - env.positions()[i][k]) - config_.kd * env.velocities()[i][k];
      double a = std::clamp(e, -1.0, 1.0);
      if (quality_ == PolicyQuality::medium) {
        a = std::clamp(a + noise(rng), -1.0, 1.0);
      }
      out[i][k] = a;
    }
  }
  return out;
}

std::array<int, 3> PolicyMix::counts(int episodes) const
{
  require_arg(episodes >= 0, "policy mix: episode count must be >= 0");
  require_arg(expert >= 0.0 && medium >= 0.0 && random >= 0.0, "policy mix: weights must be >= 0");
  const double total = expert + medium + random;
  require_arg(total > 0.0, "policy mix: weights sum to zero");
  const int e = static_cast<int>(std::lround(expert / total * episodes));
  const int m = std::min(episodes - e, static_cast<int>(std::lround(medium / total * episodes)));
  return {e, m, episodes - e - m};
}

nlohmann::json PolicyMix::to_json() const
{
  const double total = expert + medium + random;
  return {{"expert", expert / total}, {"medium", medium / total}, {"random", random / total}};
}

data::Dataset generate_dataset(
  const SpreadConfig & env_config, const PolicyMix & mix, int episodes, std::uint64_t seed,
  const ScriptedConfig & scripted)
{
  env_config.validate();
  const auto counts = mix.counts(episodes);
  SpreadToyEnv env(env_config);
  const int n = env.n_agents();
  const int d = env.obs_dim();

  data::Dataset ds;
  ds.meta.n_agents = n;
  ds.meta.obs_dim = d;
  ds.meta.act_dim = 2;
  ds.meta.act_kind = ActionKind::continuous;
  ds.meta.extra = {
    {"env", env_config.to_json()},
    {"mix", mix.to_json()},
    {"counts", {{"expert", counts[0]}, {"medium", counts[1]}, {"random", counts[2]}}},
    {"scripted", {{"kp", scripted.kp}, {"kd", scripted.kd}, {"medium_noise", scripted.medium_noise}}},
    {"seed", seed}};

  const PolicyQuality order[3] = {PolicyQuality::expert, PolicyQuality::medium, PolicyQuality::random};
  int index = 0;
  for (int q = 0; q < 3; ++q) {
    const ScriptedPolicy policy(order[q], scripted);
    for (int c = 0; c < counts[q]; ++c, ++index) {
      data::Episode ep;
      ep.n_agents = n;
      ep.obs_dim = d;
      ep.act_dim = 2;
      ep.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(index));
      ep.tag = to_string(order[q]);
      Rng policy_rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(index) + 1));
      auto push_obs = [&](const JointObs & obs) {
        for (const auto & row : obs) {
          for (double v : row) {
            ep.obs.push_back(static_cast<float>(v));
          }
        }
      };
      push_obs(env.reset(ep.seed));
      while (!env.done()) {
        JointAction a = policy.act(env, policy_rng);
        // Logged actions are single precision; step with exactly what gets stored.
        for (auto & row : a) {
          for (double & v : row) {
            v = static_cast<float>(v);
            ep.actions.push_back(static_cast<float>(v));
          }
        }
        const StepResult r = env.step(a);
        push_obs(r.obs);
        ep.rewards.push_back(static_cast<float>(r.reward));
      }
      ep.terminated = true;
      ds.episodes.push_back(std::move(ep));
    }
  }
  if (!ds.episodes.empty()) {
    ds.stats = data::compute_norm_stats(ds.episodes, 1.0, data::ReturnOrigin::episode_start);
  }
  return ds;
}

void generate_dataset_file(
  const SpreadConfig & env_config, const PolicyMix & mix, int episodes, std::uint64_t seed,
  const std::filesystem::path & path, const ScriptedConfig & scripted)
{
  data::save_dataset(path, generate_dataset(env_config, mix, episodes, seed, scripted));
}

}  // namespace madiff::env
