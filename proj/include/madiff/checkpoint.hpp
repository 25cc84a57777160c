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

#ifndef MADIFF__CHECKPOINT_HPP_
#define MADIFF__CHECKPOINT_HPP_

#include "madiff/autograd.hpp"
#include "madiff/dataset.hpp"
#include "madiff/denoiser_net.hpp"
#include "madiff/inverse_dynamics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace madiff
{

/**
 * Everything needed to plan with a trained model. Parameters are stored as
 * little-endian float32 under the "denoiser/", "invdyn/" and "bc/" namespaces.
 */
struct Checkpoint
{
  net::NetConfig net;
  invdyn::InvDynConfig invdyn;
  data::NormStats stats;
  nlohmann::json train = nlohmann::json::object();
  nlohmann::json dataset = nlohmann::json::object();
  int step = 0;
  ag::ParamStore denoiser;
  ag::ParamStore invdyn_params;
  std::optional<invdyn::InvDynConfig> bc;
  ag::ParamStore bc_params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & ckpt);
/// Throws data::DecodeError on malformed input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt);
Checkpoint load_checkpoint(const std::filesystem::path & path);

}  // namespace madiff

#endif  // MADIFF__CHECKPOINT_HPP_
