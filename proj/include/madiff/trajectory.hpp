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

#ifndef MADIFF__TRAJECTORY_HPP_
#define MADIFF__TRAJECTORY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace madiff
{

/// Agent-major (agent, time, feature) array of joint observations.
class JointTrajectory
{
public:
  JointTrajectory() = default;
  JointTrajectory(int n_agents, int horizon, int obs_dim, double fill = 0.0);

  int n_agents() const { return n_agents_; }
  int horizon() const { return horizon_; }
  int obs_dim() const { return obs_dim_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double & operator()(int agent, int t, int d) { return values_[index(agent, t, d)]; }
  double operator()(int agent, int t, int d) const { return values_[index(agent, t, d)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(int agent, int t) { return {values_.data() + index(agent, t, 0), static_cast<std::size_t>(obs_dim_)}; }
  std::span<const double> row(int agent, int t) const
  {
    return {values_.data() + index(agent, t, 0), static_cast<std::size_t>(obs_dim_)};
  }

  bool same_shape(const JointTrajectory & other) const
  {
    return n_agents_ == other.n_agents_ && horizon_ == other.horizon_ && obs_dim_ == other.obs_dim_;
  }
  bool operator==(const JointTrajectory & other) const = default;

private:
  std::size_t index(int agent, int t, int d) const
  {
    return (static_cast<std::size_t>(agent) * horizon_ + t) * obs_dim_ + d;
  }

  int n_agents_ = 0;
  int horizon_ = 0;
  int obs_dim_ = 0;
  std::vector<double> values_;
};

/// Conditioning bundle: target return plus observation entries fixed by inpainting.
struct Condition
{
  /// One shared value or one per agent; ignored when is_null.
  std::vector<double> return_values;
  /// (agent, time) flags, agent-major; a set flag fixes the whole observation row.
  std::vector<std::uint8_t> known_mask;
  JointTrajectory known_values;
  bool is_null = false;

  static Condition empty(int n_agents, int horizon, int obs_dim);

  bool known(int agent, int t) const
  {
    return known_mask[static_cast<std::size_t>(agent) * known_values.horizon() + t] != 0;
  }
  void set_known(int agent, int t, bool value)
  {
    known_mask[static_cast<std::size_t>(agent) * known_values.horizon() + t] = value ? 1 : 0;
  }
  /// Return value seen by `agent` (shared scalar broadcasts).
  double return_for(int agent) const
  {
    return return_values.size() == 1 ? return_values[0] : return_values[agent];
  }
  /// Throws invalid_argument unless consistent with the given shape.
  void validate(int n_agents, int horizon, int obs_dim) const;
  /// Copy with the return replaced by the null token.
  Condition as_null() const;
};

}  // namespace madiff

#endif  // MADIFF__TRAJECTORY_HPP_
