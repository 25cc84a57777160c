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


#include "madiff/checkpoint.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace madiff;

namespace
{

Checkpoint small_checkpoint(bool with_bc)
{
  Checkpoint c;
  c.net.obs_dim = 3;
  c.net.n_agents = 2;
  c.net.horizon_total = 4;
  c.net.base_channels = 8;
  c.net.n_levels = 2;
  c.net.n_heads = 2;
  c.net.time_embed_dim = 8;
  c.net.return_embed_dim = 8;
  c.net.norm_groups = 4;
  c.invdyn.obs_dim = 3;
  c.invdyn.act_dim = 2;
  c.invdyn.n_agents = 2;
  c.invdyn.hidden = 8;
  c.stats.obs_min = {-1.0, 0.0, 2.0};
  c.stats.obs_max = {1.0, 5.0, 3.0};
  c.stats.return_scale = 12.5;
  c.stats.return_offset = -3.0;
  c.train = {{"history", 0}, {"horizon", 4}};
  c.dataset = {{"episodes", 7}};
  c.step = 42;
  c.denoiser = net::init_denoiser_params(c.net, 1);
  c.invdyn_params = invdyn::init_invdyn_params(c.invdyn, 2);
  if (with_bc) {
    c.bc = c.invdyn;
    c.bc_params = invdyn::init_invdyn_params(c.invdyn, 3);
  }
  return c;
}

void check_store_matches(const ag::ParamStore & a, const ag::ParamStore & b)
{
  REQUIRE(a.size() == b.size());
  for (const auto & [name, p] : a) {
    REQUIRE(b.contains(name));
    const auto & q = b.at(name).value;
    REQUIRE(q.rows() == p.value.rows());
    REQUIRE(q.cols() == p.value.cols());
    for (ag::Index i = 0; i < q.size(); ++i) {
      CHECK(q.data()[i] == static_cast<double>(static_cast<float>(p.value.data()[i])));
    }
  }
}

}  // namespace

TEST_CASE("checkpoint round trip keeps configs and float32 parameters")
{
  for (bool bc : {false, true}) {
    const Checkpoint c = small_checkpoint(bc);
    const auto bytes = encode_checkpoint(c);
    const Checkpoint d = decode_checkpoint(bytes);
    CHECK(d.net.to_json() == c.net.to_json());
    CHECK(d.invdyn.to_json() == c.invdyn.to_json());
    CHECK(d.stats == c.stats);
    CHECK(d.train == c.train);
    CHECK(d.dataset == c.dataset);
    CHECK(d.step == 42);
    CHECK(d.bc.has_value() == bc);
    check_store_matches(c.denoiser, d.denoiser);
    check_store_matches(c.invdyn_params, d.invdyn_params);
    if (bc) {
      check_store_matches(c.bc_params, d.bc_params);
    }
    CHECK(encode_checkpoint(d) == bytes);
  }
}

TEST_CASE("decoded checkpoints rebuild working models")
{
  const Checkpoint c = small_checkpoint(true);
  const Checkpoint d = decode_checkpoint(encode_checkpoint(c));
  const net::Denoiser a(c.net, c.denoiser);
  const net::Denoiser b(d.net, d.denoiser);
  Rng rng(4);
  JointTrajectory x(2, 4, 3);
  fill_normal(x.values(), rng);
  Condition cond = Condition::empty(2, 4, 3);
  cond.return_values = {0.5};
  const int k = 3;
  const auto pa = a.predict(std::span(&x, 1), std::span(&cond, 1), std::span(&k, 1)).front();
  const auto pb = b.predict(std::span(&x, 1), std::span(&cond, 1), std::span(&k, 1)).front();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::abs(pa.values()[i] - pb.values()[i]) < 1e-4);
  }
}

TEST_CASE("checkpoint files save and load")
{
  const auto path = std::filesystem::temp_directory_path() / "madiff_ckpt_test" / "c.madc";
  std::filesystem::remove_all(path.parent_path());
  const Checkpoint c = small_checkpoint(false);
  save_checkpoint(path, c);
  CHECK(encode_checkpoint(load_checkpoint(path)) == encode_checkpoint(c));
  std::filesystem::remove_all(path.parent_path());
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("corrupt checkpoints raise typed decode errors")
{
  using Kind = data::DecodeError::Kind;
  const auto bytes = encode_checkpoint(small_checkpoint(false));
  auto kind_of = [](std::span<const std::uint8_t> b) {
    try {
      decode_checkpoint(b);
    } catch (const data::DecodeError & e) {
      return e.kind();
    }
    FAIL("decode accepted corrupt input");
    return Kind::malformed;
  };
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(kind_of(bad) == Kind::bad_magic);
  bad = bytes;
  bad[4] = 9;
  CHECK(kind_of(bad) == Kind::version_mismatch);
  bad = bytes;
  bad[bytes.size() - 9] ^= 0x10;
  CHECK(kind_of(bad) == Kind::checksum);
  for (std::size_t cut : {std::size_t{2}, std::size_t{7}, bytes.size() / 2, bytes.size() - 1}) {
    const auto k = kind_of(std::span(bytes).first(cut));
    CHECK((k == Kind::truncated || k == Kind::malformed));
  }
  bad = bytes;
  bad.push_back(0);
  CHECK(kind_of(bad) == Kind::malformed);
}
