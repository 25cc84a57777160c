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

#ifndef MADIFF__DATASET_HPP_
#define MADIFF__DATASET_HPP_

#include "madiff/common.hpp"
#include "madiff/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace madiff::data
{

/// One recorded multi-agent rollout, stored in single precision.
struct Episode
{
  int n_agents = 0;
  int obs_dim = 0;
  int act_dim = 0;         // action width; 1 for discrete ids
  std::vector<float> obs;      // (T + 1, N, obs_dim)
  std::vector<float> actions;  // (T, N, act_dim)
  std::vector<float> rewards;  // (T)
  bool terminated = false;
  std::uint64_t seed = 0;  // environment reset seed
  std::string tag;         // free-form label, e.g. the behaviour policy

  int length() const { return static_cast<int>(rewards.size()); }
  float obs_at(int t, int agent, int d) const
  {
    return obs[(static_cast<std::size_t>(t) * n_agents + agent) * obs_dim + d];
  }
  float action_at(int t, int agent, int d) const
  {
    return actions[(static_cast<std::size_t>(t) * n_agents + agent) * act_dim + d];
  }
  /// Throws invalid_argument when array sizes or rewards are inconsistent.
  void validate() const;
  bool operator==(const Episode &) const = default;
};

struct DatasetMeta
{
  int n_agents = 0;
  int obs_dim = 0;
  int act_dim = 0;
  ActionKind act_kind = ActionKind::continuous;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const DatasetMeta &) const = default;
};

struct NormStats
{
  /// obs_dim entries, or n_agents * obs_dim (agent-major) when per_agent.
  std::vector<double> obs_min;
  std::vector<double> obs_max;
  bool per_agent = false;
  double return_scale = 1.0;
  double return_offset = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json & j);
  bool operator==(const NormStats &) const = default;
};

struct Dataset
{
  DatasetMeta meta;
  NormStats stats;
  std::vector<Episode> episodes;

  bool operator==(const Dataset &) const = default;
};

/// Which return-to-go conditions a window: its own start step or the episode's first step.
enum class ReturnOrigin { window_start, episode_start };
ReturnOrigin parse_return_origin(const std::string & s);
std::string to_string(ReturnOrigin origin);

/// Discounted return-to-go R_t = r_t + gamma * R_{t+1}.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);
std::vector<double> compute_returns(const Episode & episode, double gamma);

/// Min/max over every recorded observation; return offset/scale span the conditioning returns.
NormStats compute_norm_stats(
  std::span<const Episode> episodes, double gamma, ReturnOrigin origin, bool per_agent = false);

/// x -> 2 (x - min) / (max - min) - 1; constant dimensions map to 0.
std::vector<double> normalize_obs(std::span<const double> obs, const NormStats & stats, int agent = 0);
std::vector<double> denormalize_obs(std::span<const double> obs, const NormStats & stats, int agent = 0);
/// Whole-trajectory variants (agent index taken from the trajectory).
JointTrajectory normalize_obs(const JointTrajectory & traj, const NormStats & stats);
JointTrajectory denormalize_obs(const JointTrajectory & traj, const NormStats & stats);

/// Raw return at `percentile` (in [0, 1], linear interpolation) of the conditioning returns.
double percentile_return(
  std::span<const Episode> episodes, double percentile, double gamma, ReturnOrigin origin);

/// (R - return_offset) / return_scale, clipped to [0, 1.2].
double normalize_return(double ret, const NormStats & stats);

struct WindowSpec
{
  int history = 0;  // C
  int horizon = 1;  // H
  double gamma = 1.0;
  ReturnOrigin origin = ReturnOrigin::window_start;
};

struct Window
{
  JointTrajectory traj;  // normalized, n_agents x (C + H) x obs_dim
  Condition cond;
  std::vector<double> actions;          // (N, C + H, act_dim), zero where invalid
  std::vector<std::uint8_t> action_ok;  // (N, C + H): a real transition exists
  bool valid = true;                    // no position past the final observation
};

/**
 * Training window starting at step t: positions hold o_{t-C} .. o_{t+H-1},
 * edge-padded before 0 and after T. The first C + 1 positions are known for
 * every agent (agent < 0) or for the given agent only.
 */
Window sample_window(
  const Episode & episode, int t, const WindowSpec & spec, const NormStats & stats, int agent = -1);

/// Distinct file decoding failures.
class DecodeError : public std::runtime_error
{
public:
  enum class Kind { bad_magic, version_mismatch, truncated, checksum, malformed };
  DecodeError(Kind kind, const std::string & what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset & dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path & path, const Dataset & dataset);
Dataset load_dataset(const std::filesystem::path & path);

}  // namespace madiff::data

#endif  // MADIFF__DATASET_HPP_
