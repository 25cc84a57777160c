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

#include "binary_io.hpp"

#include <algorithm>
#include <string>

namespace madiff
{

namespace
{

constexpr std::uint8_t kMagic[4] = {'M', 'A', 'D', 'C'};

void append_tables(
  const ag::ParamStore & store, const std::string & ns, nlohmann::json & tables,
  std::vector<const ag::Matrix *> & order)
{
  for (const auto & [name, p] : store) {
    tables.push_back({{"name", ns + name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    order.push_back(&p.value);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & ckpt)
{
  nlohmann::json tables = nlohmann::json::array();
  std::vector<const ag::Matrix *> order;
  append_tables(ckpt.denoiser, "denoiser/", tables, order);
  append_tables(ckpt.invdyn_params, "invdyn/", tables, order);
  if (ckpt.bc) {
    append_tables(ckpt.bc_params, "bc/", tables, order);
  }
  nlohmann::json header = {
    {"net", ckpt.net.to_json()},
    {"invdyn", ckpt.invdyn.to_json()},
    {"norm_stats", ckpt.stats.to_json()},
    {"train", ckpt.train},
    {"dataset", ckpt.dataset},
    {"step", ckpt.step},
    {"tensors", tables}};
  if (ckpt.bc) {
    header["bc"] = ckpt.bc->to_json();
  }

  io::ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.text(header.dump());
  for (const ag::Matrix * m : order) {
    for (ag::Index i = 0; i < m->size(); ++i) {
      w.f32(static_cast<float>(m->data()[i]));
    }
  }
  const std::uint32_t crc = io::crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
  using data::DecodeError;
  using Kind = DecodeError::Kind;
  io::ByteReader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw DecodeError(Kind::bad_magic, "not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DecodeError(
      Kind::version_mismatch, "checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint ckpt;
  nlohmann::json tables;
  try {
    const auto header = nlohmann::json::parse(r.text());
    ckpt.net = net::NetConfig::from_json(header.at("net"));
    ckpt.invdyn = invdyn::InvDynConfig::from_json(header.at("invdyn"));
    ckpt.stats = data::NormStats::from_json(header.at("norm_stats"));
    ckpt.train = header.value("train", nlohmann::json::object());
    ckpt.dataset = header.value("dataset", nlohmann::json::object());
    ckpt.step = header.value("step", 0);
    if (header.contains("bc")) {
      ckpt.bc = invdyn::InvDynConfig::from_json(header.at("bc"));
    }
    tables = header.at("tensors");
  } catch (const nlohmann::json::exception & e) {
    throw DecodeError(Kind::malformed, std::string("bad checkpoint header: ") + e.what());
  } catch (const std::invalid_argument & e) {
    throw DecodeError(Kind::malformed, std::string("bad checkpoint header: ") + e.what());
  }

  for (const auto & t : tables) {
    const std::string name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<ag::Index>();
    const auto cols = t.at("cols").get<ag::Index>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) * 4 > r.remaining()) {
      throw DecodeError(Kind::truncated, "tensor " + name + " is truncated");
    }
    ag::Matrix m(rows, cols);
    for (ag::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = r.f32();
    }
    const auto slash = name.find('/');
    const std::string ns = name.substr(0, slash + 1);
    const std::string local = slash == std::string::npos ? name : name.substr(slash + 1);
    if (ns == "denoiser/") {
      ckpt.denoiser.add(local, std::move(m));
    } else if (ns == "invdyn/") {
      ckpt.invdyn_params.add(local, std::move(m));
    } else if (ns == "bc/") {
      ckpt.bc_params.add(local, std::move(m));
    } else {
      throw DecodeError(Kind::malformed, "unknown tensor namespace in " + name);
    }
  }
  const std::uint32_t expected = io::crc32(r.span(0, r.position()));
  if (r.u32() != expected) {
    throw DecodeError(Kind::checksum, "checkpoint checksum mismatch");
  }
  if (r.remaining() != 0) {
    throw DecodeError(Kind::malformed, "trailing bytes after checkpoint data");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt)
{
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path & path)
{
  return decode_checkpoint(io::read_file(path));
}

}  // namespace madiff
