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

#ifndef MADIFF__INVERSE_DYNAMICS_HPP_
#define MADIFF__INVERSE_DYNAMICS_HPP_

#include "madiff/autograd.hpp"
#include "madiff/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace madiff::invdyn
{

struct InvDynConfig
{
  int obs_dim = 0;
  int act_dim = 0;  // continuous width, or number of discrete actions
  ActionKind act_kind = ActionKind::continuous;
  int n_agents = 1;
  bool shared = true;
  int hidden = 256;
  int hidden_layers = 2;
  /// 0 means 2 * obs_dim; obs_dim turns the net into a one-step map o -> output.
  int input_width = 0;

  int input_dim() const { return input_width > 0 ? input_width : 2 * obs_dim; }

  /// Output width: act_dim for continuous actions, act_dim logits otherwise.
  int output_dim() const { return act_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static InvDynConfig from_json(const nlohmann::json & j);
  bool operator==(const InvDynConfig &) const = default;
};

/// One transition (o, a, o') for a single agent.
struct Transition
{
  int agent = 0;
  std::vector<double> obs;
  std::vector<double> next_obs;
  std::vector<double> action;  // continuous target
  int action_id = 0;           // discrete target
};

/// Per-agent (or shared) MLP I(o, o') -> action ("InvDynParams").
class InverseDynamics
{
public:
  InverseDynamics(const InvDynConfig & config, std::uint64_t seed);
  InverseDynamics(const InvDynConfig & config, ag::ParamStore params);

  const InvDynConfig & config() const { return config_; }
  ag::ParamStore & params() { return params_; }
  const ag::ParamStore & params() const { return params_; }

  /// Raw outputs (act_dim x columns) for stacked [o; o'] inputs of one agent.
  ag::Var forward(ag::Tape & tape, const ag::Matrix & inputs, int agent) const;

  /// Continuous action vector, or a one-element vector holding the argmax id.
  std::vector<double> predict_action(
    std::span<const double> obs, std::span<const double> next_obs, int agent = 0) const;

  /// Mean squared action error (continuous) or mean cross-entropy (discrete).
  ag::Var loss(ag::Tape & tape, std::span<const Transition> batch) const;
  double id_loss(std::span<const Transition> batch) const;

private:
  std::string prefix(int agent) const;

  InvDynConfig config_;
  mutable ag::ParamStore params_;
};

ag::ParamStore init_invdyn_params(const InvDynConfig & config, std::uint64_t seed);

}  // namespace madiff::invdyn

#endif  // MADIFF__INVERSE_DYNAMICS_HPP_
