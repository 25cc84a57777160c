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

#include "madiff/inverse_dynamics.hpp"

#include "madiff/common.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace madiff::invdyn
{

using ag::Index;
using ag::Matrix;
using ag::Var;

void InvDynConfig::validate() const
{
  require_arg(obs_dim >= 1, "invdyn.obs_dim must be positive");
  require_arg(act_dim >= 1, "invdyn.act_dim must be positive");
  require_arg(n_agents >= 1, "invdyn.n_agents must be positive");
  require_arg(hidden >= 1 && hidden_layers >= 1, "invdyn hidden layout must be positive");
  require_arg(
    input_width == 0 || input_width == obs_dim || input_width == 2 * obs_dim,
    "invdyn.input_width must be 0, obs_dim or 2 * obs_dim");
}

nlohmann::json InvDynConfig::to_json() const
{
  return {
    {"obs_dim", obs_dim},
    {"act_dim", act_dim},
    {"act_kind", act_kind == ActionKind::continuous ? "continuous" : "discrete"},
    {"n_agents", n_agents},
    {"shared", shared},
    {"hidden", hidden},
    {"hidden_layers", hidden_layers},
    {"input_width", input_width}};
}

InvDynConfig InvDynConfig::from_json(const nlohmann::json & j)
{
  InvDynConfig c;
  c.obs_dim = j.at("obs_dim").get<int>();
  c.act_dim = j.at("act_dim").get<int>();
  const std::string kind = j.value("act_kind", std::string("continuous"));
  require_arg(kind == "continuous" || kind == "discrete", "invdyn.act_kind must be continuous or discrete");
  c.act_kind = kind == "continuous" ? ActionKind::continuous : ActionKind::discrete;
  c.n_agents = j.value("n_agents", 1);
  c.shared = j.value("shared", true);
  c.hidden = j.value("hidden", 256);
  c.hidden_layers = j.value("hidden_layers", 2);
  c.input_width = j.value("input_width", 0);
  return c;
}

ag::ParamStore init_invdyn_params(const InvDynConfig & c, std::uint64_t seed)
{
  c.validate();
  ag::ParamStore store;
  Rng rng(seed);
  auto linear = [&](const std::string & name, int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(out, in);
    Matrix b(out, 1);
    for (Index i = 0; i < w.size(); ++i) {
      w.data()[i] = dist(rng);
    }
    for (Index i = 0; i < b.size(); ++i) {
      b.data()[i] = dist(rng);
    }
    store.add(name + ".w", std::move(w));
    store.add(name + ".b", std::move(b));
  };
  const int copies = c.shared ? 1 : c.n_agents;
  for (int a = 0; a < copies; ++a) {
    const std::string p = c.shared ? std::string("mlp") : "mlp" + std::to_string(a);
    int in = c.input_dim();
    for (int l = 0; l < c.hidden_layers; ++l) {
      linear(p + "/l" + std::to_string(l), c.hidden, in);
      in = c.hidden;
    }
    linear(p + "/out", c.output_dim(), in);
  }
  return store;
}

InverseDynamics::InverseDynamics(const InvDynConfig & config, std::uint64_t seed)
: config_(config), params_(init_invdyn_params(config, seed))
{
}

InverseDynamics::InverseDynamics(const InvDynConfig & config, ag::ParamStore params)
: config_(config), params_(std::move(params))
{
  const ag::ParamStore reference = init_invdyn_params(config, 0);
  require_arg(reference.size() == params_.size(), "InverseDynamics: parameter set does not match config");
  for (const auto & [name, p] : reference) {
    require_arg(params_.contains(name), "InverseDynamics: missing parameter " + name);
    const auto & v = params_.at(name).value;
    require_arg(
      v.rows() == p.value.rows() && v.cols() == p.value.cols(),
      "InverseDynamics: shape mismatch for parameter " + name);
  }
}

std::string InverseDynamics::prefix(int agent) const
{
  require_arg(agent >= 0 && agent < config_.n_agents, "inverse dynamics: agent index out of range");
  return config_.shared ? std::string("mlp") : "mlp" + std::to_string(agent);
}

Var InverseDynamics::forward(ag::Tape & tape, const Matrix & inputs, int agent) const
{
  require_arg(inputs.rows() == config_.input_dim(), "inverse dynamics: input width mismatch");
  const std::string p = prefix(agent);
  Var h = tape.constant(inputs);
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const std::string n = p + "/l" + std::to_string(l);
    h = ag::mish(ag::linear(h, tape.param(params_.at(n + ".w")), tape.param(params_.at(n + ".b"))));
  }
  return ag::linear(h, tape.param(params_.at(p + "/out.w")), tape.param(params_.at(p + "/out.b")));
}

std::vector<double> InverseDynamics::predict_action(
  std::span<const double> obs, std::span<const double> next_obs, int agent) const
{
  const int d = config_.obs_dim;
  const bool one_step = config_.input_dim() == d;
  require_arg(static_cast<int>(obs.size()) == d, "predict_action: observation width mismatch");
  require_arg(
    one_step || static_cast<int>(next_obs.size()) == d, "predict_action: next observation width mismatch");
  Matrix in(config_.input_dim(), 1);
  for (int i = 0; i < d; ++i) {
    in(i, 0) = obs[i];
    if (!one_step) {
      in(d + i, 0) = next_obs[i];
    }
  }
  ag::Tape tape(false);
  const Matrix out = forward(tape, in, agent).value();
  if (config_.act_kind == ActionKind::discrete) {
    Index best = 0;
    out.col(0).maxCoeff(&best);
    return {static_cast<double>(best)};
  }
  return {out.data(), out.data() + out.size()};
}

Var InverseDynamics::loss(ag::Tape & tape, std::span<const Transition> batch) const
{
  require_arg(!batch.empty(), "id_loss: empty batch");
  const int d = config_.obs_dim;
  const bool one_step = config_.input_dim() == d;
  std::map<int, std::vector<const Transition *>> by_agent;
  for (const Transition & tr : batch) {
    by_agent[config_.shared ? 0 : tr.agent].push_back(&tr);
  }
  Var total;
  for (const auto & [agent, items] : by_agent) {
    const Index m = static_cast<Index>(items.size());
    Matrix in(config_.input_dim(), m);
    for (Index j = 0; j < m; ++j) {
      const Transition & tr = *items[j];
      require_arg(static_cast<int>(tr.obs.size()) == d, "id_loss: observation width mismatch");
      in.col(j).head(d) = Eigen::Map<const ag::Vector>(tr.obs.data(), d);
      if (!one_step) {
        require_arg(static_cast<int>(tr.next_obs.size()) == d, "id_loss: next observation width mismatch");
        in.col(j).tail(d) = Eigen::Map<const ag::Vector>(tr.next_obs.data(), d);
      }
    }
    const Var out = forward(tape, in, agent);
    Var part;
    if (config_.act_kind == ActionKind::discrete) {
      std::vector<int> labels(static_cast<std::size_t>(m));
      for (Index j = 0; j < m; ++j) {
        labels[j] = items[j]->action_id;
      }
      part = ag::softmax_cross_entropy(out, labels);
    } else {
      Matrix target(config_.act_dim, m);
      for (Index j = 0; j < m; ++j) {
        require_arg(
          static_cast<int>(items[j]->action.size()) == config_.act_dim, "id_loss: action width mismatch");
        target.col(j) = Eigen::Map<const ag::Vector>(items[j]->action.data(), config_.act_dim);
      }
      part = ag::mean_sq_norm(out, target);
    }
    // Weight each agent group by its share so the total is a mean over the batch.
    part = ag::scale(part, static_cast<double>(m) / static_cast<double>(batch.size()));
    total = total.valid() ? ag::add(total, part) : part;
  }
  return total;
}

double InverseDynamics::id_loss(std::span<const Transition> batch) const
{
  ag::Tape tape(false);
  return loss(tape, batch).value()(0, 0);
}

}  // namespace madiff::invdyn
