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

#include "madiff/trajectory.hpp"

#include "madiff/common.hpp"

#include <cmath>

namespace madiff
{

JointTrajectory::JointTrajectory(int n_agents, int horizon, int obs_dim, double fill)
: n_agents_(n_agents), horizon_(horizon), obs_dim_(obs_dim)
{
  require_arg(n_agents >= 1 && horizon >= 1 && obs_dim >= 1, "JointTrajectory: dimensions must be positive");
  values_.assign(static_cast<std::size_t>(n_agents) * horizon * obs_dim, fill);
}

Condition Condition::empty(int n_agents, int horizon, int obs_dim)
{
  Condition c;
  c.return_values = {0.0};
  c.known_mask.assign(static_cast<std::size_t>(n_agents) * horizon, 0);
  c.known_values = JointTrajectory(n_agents, horizon, obs_dim);
  return c;
}

void Condition::validate(int n_agents, int horizon, int obs_dim) const
{
  require_arg(
    known_values.n_agents() == n_agents && known_values.horizon() == horizon &&
      known_values.obs_dim() == obs_dim,
    "Condition: known_values shape does not match trajectory");
  require_arg(
    known_mask.size() == static_cast<std::size_t>(n_agents) * horizon,
    "Condition: known_mask size does not match trajectory");
  if (!is_null) {
    require_arg(
      return_values.size() == 1 || return_values.size() == static_cast<std::size_t>(n_agents),
      "Condition: return_values must be scalar or per-agent");
    for (double r : return_values) {
      require_arg(std::isfinite(r), "Condition: return_values must be finite");
    }
  }
}

Condition Condition::as_null() const
{
  Condition c = *this;
  c.is_null = true;
  return c;
}

}  // namespace madiff
