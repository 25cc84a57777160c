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

#ifndef MADIFF__DENOISER_NET_HPP_
#define MADIFF__DENOISER_NET_HPP_

#include "madiff/autograd.hpp"
#include "madiff/common.hpp"
#include "madiff/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace madiff::net
{

struct NetConfig
{
  int obs_dim = 0;
  int n_agents = 0;
  int horizon_total = 0;  // C + H
  int base_channels = 16;
  int n_levels = 3;
  int n_heads = 4;
  bool share_unet = true;
  bool use_attention = true;
  bool attention_residual = true;  // decoder skip receives c + attention(c) instead of attention(c)
  int time_embed_dim = 32;
  int return_embed_dim = 32;
  int kernel_size = 5;
  int norm_groups = 8;

  /// Feature width at U-Net level l (0 is the input resolution).
  int channels(int level) const { return base_channels << level; }
  /// Sequence length at U-Net level l.
  int length(int level) const { return horizon_total >> level; }

  void validate() const;
  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json & j);
  bool operator==(const NetConfig &) const = default;
};

/**
 * Packs S joint trajectories into an obs_dim x (N * S * T) matrix whose
 * columns are ordered (agent, sample, time), time fastest.
 */
ag::Matrix pack_batch(std::span<const JointTrajectory> batch);
std::vector<JointTrajectory> unpack_batch(const ag::Matrix & m, int n_samples, int n_agents, int horizon);

/// Anything that predicts the diffusion noise for a batch of noisy joint trajectories.
class NoiseModel
{
public:
  virtual ~NoiseModel() = default;

  /// Predicted noise in pack_batch layout. steps[s] is the diffusion step of sample s.
  virtual ag::Var forward(
    ag::Tape & tape, std::span<const JointTrajectory> noisy, std::span<const Condition> conds,
    std::span<const int> steps) const = 0;

  /// Gradient-free convenience wrapper around forward().
  std::vector<JointTrajectory> predict(
    std::span<const JointTrajectory> noisy, std::span<const Condition> conds,
    std::span<const int> steps) const;
};

/// Sinusoidal step code with interleaved (sin, cos) pairs; dim must be even.
std::vector<double> sinusoidal_embedding(int k, int dim);

/**
 * Multi-head scaled dot-product attention across agents at every position.
 * `features` holds one width x positions matrix per agent; returns the fused
 * features per agent. Query/key/value maps are the "{prefix}/query" etc.
 * linear layers in `params`.
 */
struct AttentionResult
{
  std::vector<ag::Matrix> fused;
  /// (N * N) x (heads * positions); row i * N + j is agent i's weight on agent j.
  ag::Matrix weights;
};
AttentionResult agent_attention(
  std::span<const ag::Matrix> features, const ag::ParamStore & params, const std::string & prefix,
  int n_heads);

/**
 * Temporal U-Net noise predictor with cross-agent attention on every decoder
 * skip connection. Holds the learnable parameters ("DenoiserParams").
 */
class Denoiser : public NoiseModel
{
public:
  Denoiser(const NetConfig & config, std::uint64_t seed);
  /// Adopts externally loaded parameters; throws if names or shapes disagree with config.
  Denoiser(const NetConfig & config, ag::ParamStore params);

  const NetConfig & config() const { return config_; }
  ag::ParamStore & params() { return params_; }
  const ag::ParamStore & params() const { return params_; }

  ag::Var forward(
    ag::Tape & tape, std::span<const JointTrajectory> noisy, std::span<const Condition> conds,
    std::span<const int> steps) const override;

  /// Learned step embedding (time_embed_dim x steps.size()).
  ag::Var embed_timestep(ag::Tape & tape, std::span<const int> steps) const;

  /// Number of U-Net parameter sets (1 when shared).
  int unet_copies() const { return config_.share_unet ? 1 : config_.n_agents; }

private:
  ag::Var param(ag::Tape & tape, const std::string & name) const;
  ag::Var res_block(
    ag::Tape & tape, const std::string & prefix, const ag::Var & x, const ag::Var & emb,
    ag::SeqLayout layout) const;
  ag::Var attention(ag::Tape & tape, int level, const ag::Var & skip, int n_agents) const;

  NetConfig config_;
  // Parameters are only read during forward(); gradients land in Parameter::grad
  // when a gradient-enabled tape runs backward().
  mutable ag::ParamStore params_;
};

/// Builds the parameter set for `config`, initialised deterministically from `seed`.
ag::ParamStore init_denoiser_params(const NetConfig & config, std::uint64_t seed);

/**
 * Compares analytic gradients against central finite differences on
 * `samples` randomly chosen parameter entries. Returns the maximum of
 * |analytic - numeric| / (|analytic| + 1e-8).
 */
double grad_check(
  ag::ParamStore & params, const std::function<ag::Var(ag::Tape &)> & loss_fn, int samples,
  double step, Rng & rng);

}  // namespace madiff::net

#endif  // MADIFF__DENOISER_NET_HPP_
