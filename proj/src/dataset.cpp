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

#include "madiff/dataset.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace madiff::data
{

namespace
{

constexpr std::uint8_t kMagic[4] = {'M', 'A', 'D', 'S'};

std::string kind_name(ActionKind kind)
{
  return kind == ActionKind::continuous ? "continuous" : "discrete";
}

std::size_t stats_offset(const NormStats & stats, int agent, std::size_t dim)
{
  if (!stats.per_agent) {
    return 0;
  }
  const std::size_t off = static_cast<std::size_t>(agent) * dim;
  require_arg(agent >= 0 && off + dim <= stats.obs_min.size(), "normalization stats: agent out of range");
  return off;
}

std::size_t stats_width(const NormStats & stats, std::size_t dim)
{
  require_arg(
    stats.per_agent ? stats.obs_min.size() % dim == 0 && !stats.obs_min.empty() : stats.obs_min.size() == dim,
    "normalization stats do not match the observation width");
  return dim;
}

}  // namespace

void Episode::validate() const
{
  require_arg(n_agents >= 1 && obs_dim >= 1 && act_dim >= 1, "episode: dimensions must be positive");
  const std::size_t T = rewards.size();
  require_arg(T >= 1, "episode: needs at least one step");
  require_arg(
    obs.size() == (T + 1) * static_cast<std::size_t>(n_agents) * obs_dim,
    "episode: observation array size mismatch");
  require_arg(
    actions.size() == T * static_cast<std::size_t>(n_agents) * act_dim, "episode: action array size mismatch");
  for (float r : rewards) {
    require_arg(std::isfinite(r), "episode: non-finite reward");
  }
}

void NormStats::validate() const
{
  require_arg(obs_min.size() == obs_max.size(), "normalization stats: min/max size mismatch");
  for (std::size_t i = 0; i < obs_min.size(); ++i) {
    require_arg(std::isfinite(obs_min[i]) && std::isfinite(obs_max[i]), "normalization stats: non-finite bound");
    require_arg(obs_max[i] >= obs_min[i], "normalization stats: max below min");
  }
  require_arg(std::isfinite(return_scale) && return_scale > 0.0, "normalization stats: return_scale must be > 0");
  require_arg(std::isfinite(return_offset), "normalization stats: return_offset must be finite");
}

nlohmann::json NormStats::to_json() const
{
  return {
    {"obs_min", obs_min},
    {"obs_max", obs_max},
    {"per_agent", per_agent},
    {"return_scale", return_scale},
    {"return_offset", return_offset}};
}

NormStats NormStats::from_json(const nlohmann::json & j)
{
  NormStats s;
  s.obs_min = j.at("obs_min").get<std::vector<double>>();
  s.obs_max = j.at("obs_max").get<std::vector<double>>();
  s.per_agent = j.value("per_agent", false);
  s.return_scale = j.at("return_scale").get<double>();
  s.return_offset = j.value("return_offset", 0.0);
  s.validate();
  return s;
}

ReturnOrigin parse_return_origin(const std::string & s)
{
  if (s == "window_start") {
    return ReturnOrigin::window_start;
  }
  if (s == "episode_start") {
    return ReturnOrigin::episode_start;
  }
  throw std::invalid_argument("unknown return origin '" + s + "'");
}

std::string to_string(ReturnOrigin origin)
{
  return origin == ReturnOrigin::window_start ? "window_start" : "episode_start";
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma)
{
  require_arg(!rewards.empty(), "compute_returns: empty rewards");
  require_arg(gamma > 0.0 && gamma <= 1.0, "compute_returns: gamma must lie in (0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

std::vector<double> compute_returns(const Episode & episode, double gamma)
{
  const std::vector<double> r(episode.rewards.begin(), episode.rewards.end());
  return compute_returns(r, gamma);
}

NormStats compute_norm_stats(
  std::span<const Episode> episodes, double gamma, ReturnOrigin origin, bool per_agent)
{
  require_arg(!episodes.empty(), "compute_norm_stats: no episodes");
  const int n = episodes.front().n_agents;
  const int d = episodes.front().obs_dim;
  NormStats s;
  s.per_agent = per_agent;
  const std::size_t width = per_agent ? static_cast<std::size_t>(n) * d : static_cast<std::size_t>(d);
  s.obs_min.assign(width, std::numeric_limits<double>::infinity());
  s.obs_max.assign(width, -std::numeric_limits<double>::infinity());
  double r_lo = std::numeric_limits<double>::infinity();
  double r_hi = -std::numeric_limits<double>::infinity();
  for (const Episode & ep : episodes) {
    ep.validate();
    require_arg(ep.n_agents == n && ep.obs_dim == d, "compute_norm_stats: inconsistent episode shapes");
    for (int t = 0; t <= ep.length(); ++t) {
      for (int a = 0; a < n; ++a) {
        const std::size_t off = per_agent ? static_cast<std::size_t>(a) * d : 0;
        for (int k = 0; k < d; ++k) {
          const double v = ep.obs_at(t, a, k);
          s.obs_min[off + k] = std::min(s.obs_min[off + k], v);
          s.obs_max[off + k] = std::max(s.obs_max[off + k], v);
        }
      }
    }
    const auto returns = compute_returns(ep, gamma);
    if (origin == ReturnOrigin::episode_start) {
      r_lo = std::min(r_lo, returns.front());
      r_hi = std::max(r_hi, returns.front());
    } else {
      for (double r : returns) {
        r_lo = std::min(r_lo, r);
        r_hi = std::max(r_hi, r);
      }
    }
  }
  s.return_offset = r_lo;
  s.return_scale = r_hi - r_lo > 1e-12 ? r_hi - r_lo : 1.0;
  return s;
}

std::vector<double> normalize_obs(std::span<const double> obs, const NormStats & stats, int agent)
{
  const std::size_t d = stats_width(stats, obs.size());
  const std::size_t off = stats_offset(stats, agent, d);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double lo = stats.obs_min[off + i];
    const double hi = stats.obs_max[off + i];
    out[i] = hi > lo ? 2.0 * (obs[i] - lo) / (hi - lo) - 1.0 : 0.0;
  }
  return out;
}

std::vector<double> denormalize_obs(std::span<const double> obs, const NormStats & stats, int agent)
{
  const std::size_t d = stats_width(stats, obs.size());
  const std::size_t off = stats_offset(stats, agent, d);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double lo = stats.obs_min[off + i];
    const double hi = stats.obs_max[off + i];
    out[i] = hi > lo ? (obs[i] + 1.0) * 0.5 * (hi - lo) + lo : lo;
  }
  return out;
}

namespace
{

JointTrajectory map_rows(
  const JointTrajectory & traj, const NormStats & stats,
  std::vector<double> (*fn)(std::span<const double>, const NormStats &, int))
{
  JointTrajectory out(traj.n_agents(), traj.horizon(), traj.obs_dim());
  for (int a = 0; a < traj.n_agents(); ++a) {
    for (int t = 0; t < traj.horizon(); ++t) {
      const auto row = fn(traj.row(a, t), stats, a);
      std::copy(row.begin(), row.end(), out.row(a, t).begin());
    }
  }
  return out;
}

}  // namespace

JointTrajectory normalize_obs(const JointTrajectory & traj, const NormStats & stats)
{
  return map_rows(traj, stats, &normalize_obs);
}

JointTrajectory denormalize_obs(const JointTrajectory & traj, const NormStats & stats)
{
  return map_rows(traj, stats, &denormalize_obs);
}

double percentile_return(
  std::span<const Episode> episodes, double percentile, double gamma, ReturnOrigin origin)
{
  require_arg(percentile >= 0.0 && percentile <= 1.0, "percentile_return: percentile must lie in [0, 1]");
  std::vector<double> values;
  for (const auto & ep : episodes) {
    const auto r = compute_returns(ep, gamma);
    if (origin == ReturnOrigin::episode_start) {
      values.push_back(r.front());
    } else {
      values.insert(values.end(), r.begin(), r.end());
    }
  }
  require_arg(!values.empty(), "percentile_return: no episodes");
  std::sort(values.begin(), values.end());
  const double pos = percentile * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double normalize_return(double ret, const NormStats & stats)
{
  return std::clamp((ret - stats.return_offset) / stats.return_scale, 0.0, 1.2);
}

Window sample_window(
  const Episode & episode, int t, const WindowSpec & spec, const NormStats & stats, int agent)
{
  const int T = episode.length();
  require_arg(t >= 0 && t < T, "sample_window: start index out of range");
  require_arg(spec.history >= 0 && spec.horizon >= 1, "sample_window: invalid horizons");
  require_arg(agent < episode.n_agents, "sample_window: agent out of range");
  const int n = episode.n_agents;
  const int d = episode.obs_dim;
  const int a_dim = episode.act_dim;
  const int len = spec.history + spec.horizon;

  Window w;
  w.traj = JointTrajectory(n, len, d);
  w.cond = Condition::empty(n, len, d);
  w.actions.assign(static_cast<std::size_t>(n) * len * a_dim, 0.0);
  w.action_ok.assign(static_cast<std::size_t>(n) * len, 0);
  w.valid = t + spec.horizon - 1 <= T;

  std::vector<double> raw(d);
  for (int p = 0; p < len; ++p) {
    const int u = t - spec.history + p;
    const int src = std::clamp(u, 0, T);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) {
        raw[k] = episode.obs_at(src, i, k);
      }
      const auto norm = normalize_obs(raw, stats, i);
      std::copy(norm.begin(), norm.end(), w.traj.row(i, p).begin());
      if (u >= 0 && u < T) {
        w.action_ok[static_cast<std::size_t>(i) * len + p] = 1;
        for (int k = 0; k < a_dim; ++k) {
          w.actions[(static_cast<std::size_t>(i) * len + p) * a_dim + k] = episode.action_at(u, i, k);
        }
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (agent >= 0 && i != agent) {
      continue;
    }
    for (int p = 0; p <= spec.history; ++p) {
      w.cond.set_known(i, p, true);
      const auto src = w.traj.row(i, p);
      std::copy(src.begin(), src.end(), w.cond.known_values.row(i, p).begin());
    }
  }
  const auto returns = compute_returns(episode, spec.gamma);
  const double r = spec.origin == ReturnOrigin::window_start ? returns[t] : returns.front();
  w.cond.return_values = {normalize_return(r, stats)};
  return w;
}

std::vector<std::uint8_t> encode_dataset(const Dataset & dataset)
{
  dataset.stats.validate();
  nlohmann::json meta = {
    {"n_agents", dataset.meta.n_agents},
    {"obs_dim", dataset.meta.obs_dim},
    {"act_dim", dataset.meta.act_dim},
    {"act_kind", kind_name(dataset.meta.act_kind)},
    {"episode_count", dataset.episodes.size()},
    {"norm_stats", dataset.stats.to_json()},
    {"extra", dataset.meta.extra}};

  io::ByteWriter w;
  w.raw(kMagic);
  w.u32(kDatasetVersion);
  w.text(meta.dump());
  for (const Episode & ep : dataset.episodes) {
    ep.validate();
    require_arg(
      ep.n_agents == dataset.meta.n_agents && ep.obs_dim == dataset.meta.obs_dim &&
        ep.act_dim == dataset.meta.act_dim,
      "encode_dataset: episode shape disagrees with metadata");
    const std::size_t start = w.size();
    w.u32(static_cast<std::uint32_t>(ep.length()));
    w.u32(static_cast<std::uint32_t>(ep.n_agents));
    w.u32(static_cast<std::uint32_t>(ep.obs_dim));
    w.u32(static_cast<std::uint32_t>(ep.act_dim));
    w.u8(ep.terminated ? 1 : 0);
    w.u64(ep.seed);
    w.text(ep.tag);
    for (float v : ep.obs) {
      w.f32(v);
    }
    for (float v : ep.actions) {
      w.f32(v);
    }
    for (float v : ep.rewards) {
      w.f32(v);
    }
    const std::span<const std::uint8_t> block(w.bytes().data() + start, w.size() - start);
    w.u32(io::crc32(block));
  }
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes)
{
  using Kind = DecodeError::Kind;
  io::ByteReader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw DecodeError(Kind::bad_magic, "not a dataset file");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw DecodeError(
      Kind::version_mismatch, "dataset version " + std::to_string(version) + " is not supported");
  }
  Dataset ds;
  std::size_t count = 0;
  try {
    const auto meta = nlohmann::json::parse(r.text());
    ds.meta.n_agents = meta.at("n_agents").get<int>();
    ds.meta.obs_dim = meta.at("obs_dim").get<int>();
    ds.meta.act_dim = meta.at("act_dim").get<int>();
    const std::string kind = meta.at("act_kind").get<std::string>();
    if (kind != "continuous" && kind != "discrete") {
      throw DecodeError(Kind::malformed, "unknown action kind '" + kind + "'");
    }
    ds.meta.act_kind = kind == "continuous" ? ActionKind::continuous : ActionKind::discrete;
    ds.meta.extra = meta.value("extra", nlohmann::json::object());
    ds.stats = NormStats::from_json(meta.at("norm_stats"));
    count = meta.at("episode_count").get<std::size_t>();
  } catch (const nlohmann::json::exception & e) {
    throw DecodeError(Kind::malformed, std::string("bad dataset metadata: ") + e.what());
  } catch (const std::invalid_argument & e) {
    throw DecodeError(Kind::malformed, std::string("bad dataset metadata: ") + e.what());
  }

  ds.episodes.reserve(std::min<std::size_t>(count, 1 << 16));
  for (std::size_t e = 0; e < count; ++e) {
    const std::size_t start = r.position();
    Episode ep;
    const std::uint32_t T = r.u32();
    ep.n_agents = static_cast<int>(r.u32());
    ep.obs_dim = static_cast<int>(r.u32());
    ep.act_dim = static_cast<int>(r.u32());
    ep.terminated = r.u8() != 0;
    ep.seed = r.u64();
    ep.tag = r.text();
    if (
      ep.n_agents != ds.meta.n_agents || ep.obs_dim != ds.meta.obs_dim || ep.act_dim != ds.meta.act_dim ||
      T == 0) {
      throw DecodeError(Kind::malformed, "episode " + std::to_string(e) + " has an inconsistent shape header");
    }
    const std::size_t per_step = static_cast<std::size_t>(ep.n_agents);
    const std::size_t n_obs = (T + 1ull) * per_step * ep.obs_dim;
    const std::size_t n_act = T * per_step * ep.act_dim;
    if ((n_obs + n_act + T) * 4 > r.remaining()) {
      throw DecodeError(Kind::truncated, "episode " + std::to_string(e) + " is truncated");
    }
    ep.obs.resize(n_obs);
    for (float & v : ep.obs) {
      v = r.f32();
    }
    ep.actions.resize(n_act);
    for (float & v : ep.actions) {
      v = r.f32();
    }
    ep.rewards.resize(T);
    for (float & v : ep.rewards) {
      v = r.f32();
    }
    const std::uint32_t expected = io::crc32(r.span(start, r.position()));
    if (r.u32() != expected) {
      throw DecodeError(Kind::checksum, "checksum mismatch in episode " + std::to_string(e));
    }
    ds.episodes.push_back(std::move(ep));
  }
  if (r.remaining() != 0) {
    throw DecodeError(Kind::malformed, "trailing bytes after the last episode");
  }
  return ds;
}

void save_dataset(const std::filesystem::path & path, const Dataset & dataset)
{
  io::write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path & path)
{
  return decode_dataset(io::read_file(path));
}

}  // namespace madiff::data
