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

#include "madiff/denoiser_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace madiff::net
{

using ag::Index;
using ag::Matrix;
using ag::Var;

// ---------------------------------------------------------------------------
// NetConfig

void NetConfig::validate() const
{
  require_arg(obs_dim >= 1, "net.obs_dim must be positive");
  require_arg(n_agents >= 1, "net.n_agents must be positive");
  require_arg(n_levels >= 1, "net.n_levels must be positive");
  require_arg(base_channels >= 1, "net.base_channels must be positive");
  require_arg(
    horizon_total >= 1 && horizon_total % (1 << (n_levels - 1)) == 0,
    "net.horizon_total must be divisible by 2^(n_levels - 1)");
  require_arg(n_heads >= 1 && base_channels % n_heads == 0, "net.n_heads must divide base_channels");
  require_arg(
    norm_groups >= 1 && base_channels % norm_groups == 0,
    "net.norm_groups must divide base_channels");
  require_arg(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "net.time_embed_dim must be even");
  require_arg(return_embed_dim >= 1, "net.return_embed_dim must be positive");
  require_arg(kernel_size >= 1 && kernel_size % 2 == 1, "net.kernel_size must be odd");
}

nlohmann::json NetConfig::to_json() const
{
  return {
    {"obs_dim", obs_dim},
    {"n_agents", n_agents},
    {"horizon_total", horizon_total},
    {"base_channels", base_channels},
    {"n_levels", n_levels},
    {"n_heads", n_heads},
    {"share_unet", share_unet},
    {"use_attention", use_attention},
    {"attention_residual", attention_residual},
    {"time_embed_dim", time_embed_dim},
    {"return_embed_dim", return_embed_dim},
    {"kernel_size", kernel_size},
    {"norm_groups", norm_groups}};
}

NetConfig NetConfig::from_json(const nlohmann::json & j)
{
  NetConfig c;
  c.obs_dim = j.at("obs_dim").get<int>();
  c.n_agents = j.at("n_agents").get<int>();
  c.horizon_total = j.at("horizon_total").get<int>();
  c.base_channels = j.value("base_channels", c.base_channels);
  c.n_levels = j.value("n_levels", c.n_levels);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.share_unet = j.value("share_unet", c.share_unet);
  c.use_attention = j.value("use_attention", c.use_attention);
  c.attention_residual = j.value("attention_residual", c.attention_residual);
  c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
  c.return_embed_dim = j.value("return_embed_dim", c.return_embed_dim);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.norm_groups = j.value("norm_groups", c.norm_groups);
  return c;
}

// ---------------------------------------------------------------------------
// Packing

Matrix pack_batch(std::span<const JointTrajectory> batch)
{
  require_arg(!batch.empty(), "pack_batch: empty batch");
  const int n = batch.front().n_agents();
  const int h = batch.front().horizon();
  const int d = batch.front().obs_dim();
  const Index s_count = static_cast<Index>(batch.size());
  Matrix m(d, n * s_count * h);
  for (Index s = 0; s < s_count; ++s) {
    require_arg(batch[s].same_shape(batch.front()), "pack_batch: ragged batch");
    for (int a = 0; a < n; ++a) {
      for (int t = 0; t < h; ++t) {
        const auto row = batch[s].row(a, t);
        m.col((a * s_count + s) * h + t) = Eigen::Map<const ag::Vector>(row.data(), d);
      }
    }
  }
  return m;
}

std::vector<JointTrajectory> unpack_batch(const Matrix & m, int n_samples, int n_agents, int horizon)
{
  require_arg(
    m.cols() == static_cast<Index>(n_samples) * n_agents * horizon, "unpack_batch: column mismatch");
  const int d = static_cast<int>(m.rows());
  std::vector<JointTrajectory> out(n_samples, JointTrajectory(n_agents, horizon, d));
  for (int s = 0; s < n_samples; ++s) {
    for (int a = 0; a < n_agents; ++a) {
      for (int t = 0; t < horizon; ++t) {
        auto row = out[s].row(a, t);
        Eigen::Map<ag::Vector>(row.data(), d) = m.col((static_cast<Index>(a) * n_samples + s) * horizon + t);
      }
    }
  }
  return out;
}

std::vector<JointTrajectory> NoiseModel::predict(
  std::span<const JointTrajectory> noisy, std::span<const Condition> conds,
  std::span<const int> steps) const
{
  ag::Tape tape(false);
  const Var y = forward(tape, noisy, conds, steps);
  return unpack_batch(
    y.value(), static_cast<int>(noisy.size()), noisy.front().n_agents(), noisy.front().horizon());
}

// ---------------------------------------------------------------------------
// Embeddings and attention

std::vector<double> sinusoidal_embedding(int k, int dim)
{
  require_arg(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even");
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double freq = half == 1 ? 1.0 : std::exp(-std::log(10000.0) * i / (half - 1));
    out[2 * i] = std::sin(k * freq);
    out[2 * i + 1] = std::cos(k * freq);
  }
  return out;
}

AttentionResult agent_attention(
  std::span<const Matrix> features, const ag::ParamStore & params, const std::string & prefix,
  int n_heads)
{
  require_arg(!features.empty(), "agent_attention: no agents");
  const Index width = features.front().rows();
  const Index positions = features.front().cols();
  for (const Matrix & f : features) {
    require_arg(f.rows() == width && f.cols() == positions, "agent_attention: agent feature shapes differ");
  }
  const Index n = static_cast<Index>(features.size());
  Matrix all(width, n * positions);
  for (Index a = 0; a < n; ++a) {
    all.middleCols(a * positions, positions) = features[a];
  }
  ag::Tape tape(false);
  const Var x = tape.constant(std::move(all));
  auto lin = [&](const std::string & name) {
    const auto & w = params.at(prefix + "/" + name + ".w").value;
    const auto & b = params.at(prefix + "/" + name + ".b").value;
    require_arg(w.cols() == width, "agent_attention: parameter width mismatch");
    return ag::linear(x, tape.constant(w), tape.constant(b));
  };
  AttentionResult result;
  const Var y = ag::agent_attention(lin("query"), lin("key"), lin("value"), n, n_heads, &result.weights);
  for (Index a = 0; a < n; ++a) {
    result.fused.emplace_back(y.value().middleCols(a * positions, positions));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Parameter construction

namespace
{

class ParamBuilder
{
public:
  ParamBuilder(ag::ParamStore & store, std::uint64_t seed) : store_(store), rng_(seed) {}

  void linear(const std::string & name, int out, int in)
  {
    uniform(name + ".w", out, in, in);
    uniform(name + ".b", out, 1, in);
  }
  void conv(const std::string & name, int out, int in, int kernel)
  {
    uniform(name + ".w", out, in * kernel, in * kernel);
    uniform(name + ".b", out, 1, in * kernel);
  }
  void norm(const std::string & name, int ch)
  {
    store_.add(name + ".g", Matrix::Ones(ch, 1));
    store_.add(name + ".b", Matrix::Zero(ch, 1));
  }
  void normal(const std::string & name, int rows, int cols, double sd)
  {
    std::normal_distribution<double> dist(0.0, sd);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = dist(rng_);
    }
    store_.add(name, std::move(m));
  }

private:
  void uniform(const std::string & name, int rows, int cols, int fan_in)
  {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = dist(rng_);
    }
    store_.add(name, std::move(m));
  }

  ag::ParamStore & store_;
  Rng rng_;
};

std::string unet_prefix(const NetConfig & c, int copy)
{
  return c.share_unet ? std::string("unet") : "unet" + std::to_string(copy);
}

void build_res_block(ParamBuilder & b, const std::string & p, int cin, int cout, const NetConfig & c)
{
  b.conv(p + "/conv1", cout, cin, c.kernel_size);
  b.norm(p + "/gn1", cout);
  b.linear(p + "/emb", cout, c.time_embed_dim);
  b.conv(p + "/conv2", cout, cout, c.kernel_size);
  b.norm(p + "/gn2", cout);
  if (cin != cout) {
    b.conv(p + "/skip", cout, cin, 1);
  }
}

}  // namespace

ag::ParamStore init_denoiser_params(const NetConfig & c, std::uint64_t seed)
{
  c.validate();
  ag::ParamStore store;
  ParamBuilder b(store, seed);
  const int td = c.time_embed_dim;
  b.linear("embed/time.l1", 4 * td, td);
  b.linear("embed/time.l2", td, 4 * td);
  b.linear("embed/return.l1", c.return_embed_dim, 1);
  b.linear("embed/return.l2", td, c.return_embed_dim);
  b.normal("embed/null", td, 1, 1.0);
  for (int l = 0; l < c.n_levels; ++l) {
    const int ch = c.channels(l);
    const std::string p = "attn" + std::to_string(l);
    b.linear(p + "/query", ch, ch);
    b.linear(p + "/key", ch, ch);
    b.linear(p + "/value", ch, ch);
  }
  const int L = c.n_levels;
  for (int u = 0; u < (c.share_unet ? 1 : c.n_agents); ++u) {
    const std::string p = unet_prefix(c, u);
    for (int l = 0; l < L; ++l) {
      const std::string e = p + "/enc" + std::to_string(l);
      build_res_block(b, e + "/res0", l == 0 ? c.obs_dim : c.channels(l - 1), c.channels(l), c);
      build_res_block(b, e + "/res1", c.channels(l), c.channels(l), c);
      if (l < L - 1) {
        b.conv(e + "/down", c.channels(l), c.channels(l), 3);
      }
    }
    build_res_block(b, p + "/mid/res0", c.channels(L - 1), c.channels(L - 1), c);
    build_res_block(b, p + "/mid/res1", c.channels(L - 1), c.channels(L - 1), c);
    for (int l = L - 1; l >= 0; --l) {
      const std::string d = p + "/dec" + std::to_string(l);
      build_res_block(b, d + "/res0", 2 * c.channels(l), c.channels(l), c);
      build_res_block(b, d + "/res1", c.channels(l), c.channels(l), c);
      if (l > 0) {
        b.conv(d + "/up", c.channels(l - 1), c.channels(l), 3);
      }
    }
    b.conv(p + "/final/conv", c.channels(0), c.channels(0), c.kernel_size);
    b.norm(p + "/final/gn", c.channels(0));
    b.conv(p + "/final/out", c.obs_dim, c.channels(0), 1);
  }
  return store;
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(const NetConfig & config, std::uint64_t seed)
: config_(config), params_(init_denoiser_params(config, seed))
{
}

Denoiser::Denoiser(const NetConfig & config, ag::ParamStore params)
: config_(config), params_(std::move(params))
{
  const ag::ParamStore reference = init_denoiser_params(config, 0);
  require_arg(reference.size() == params_.size(), "Denoiser: parameter set does not match config");
  for (const auto & [name, p] : reference) {
    require_arg(params_.contains(name), "Denoiser: missing parameter " + name);
    const auto & v = params_.at(name).value;
    require_arg(
      v.rows() == p.value.rows() && v.cols() == p.value.cols(),
      "Denoiser: shape mismatch for parameter " + name);
  }
}

Var Denoiser::param(ag::Tape & tape, const std::string & name) const
{
  return tape.param(params_.at(name));
}

Var Denoiser::embed_timestep(ag::Tape & tape, std::span<const int> steps) const
{
  const int td = config_.time_embed_dim;
  Matrix code(td, static_cast<Index>(steps.size()));
  for (std::size_t s = 0; s < steps.size(); ++s) {
    require_arg(steps[s] >= 1, "embed_timestep: diffusion step must be >= 1");
    const auto e = sinusoidal_embedding(steps[s], td);
    code.col(static_cast<Index>(s)) = Eigen::Map<const ag::Vector>(e.data(), td);
  }
  Var h = ag::linear(
    tape.constant(std::move(code)), param(tape, "embed/time.l1.w"), param(tape, "embed/time.l1.b"));
  h = ag::mish(h);
  return ag::linear(h, param(tape, "embed/time.l2.w"), param(tape, "embed/time.l2.b"));
}

Var Denoiser::res_block(
  ag::Tape & tape, const std::string & p, const Var & x, const Var & emb, ag::SeqLayout layout) const
{
  const int k = config_.kernel_size;
  const int groups = config_.norm_groups;
  Var h = ag::conv1d(x, param(tape, p + "/conv1.w"), param(tape, p + "/conv1.b"), layout, k, 1, k / 2);
  h = ag::mish(ag::group_norm(h, param(tape, p + "/gn1.g"), param(tape, p + "/gn1.b"), groups, layout));
  const Var e = ag::linear(ag::mish(emb), param(tape, p + "/emb.w"), param(tape, p + "/emb.b"));
  h = ag::add_per_sequence(h, e, layout);
  h = ag::conv1d(h, param(tape, p + "/conv2.w"), param(tape, p + "/conv2.b"), layout, k, 1, k / 2);
  h = ag::mish(ag::group_norm(h, param(tape, p + "/gn2.g"), param(tape, p + "/gn2.b"), groups, layout));
  if (params_.contains(p + "/skip.w")) {
    return ag::add(h, ag::conv1d(x, param(tape, p + "/skip.w"), param(tape, p + "/skip.b"), layout, 1, 1, 0));
  }
  return ag::add(h, x);
}

Var Denoiser::attention(ag::Tape & tape, int level, const Var & skip, int n_agents) const
{
  const std::string p = "attn" + std::to_string(level);
  const Var q = ag::linear(skip, param(tape, p + "/query.w"), param(tape, p + "/query.b"));
  const Var k = ag::linear(skip, param(tape, p + "/key.w"), param(tape, p + "/key.b"));
  const Var v = ag::linear(skip, param(tape, p + "/value.w"), param(tape, p + "/value.b"));
  return ag::agent_attention(q, k, v, n_agents, config_.n_heads);
}

Var Denoiser::forward(
  ag::Tape & tape, std::span<const JointTrajectory> noisy, std::span<const Condition> conds,
  std::span<const int> steps) const
{
  const NetConfig & c = config_;
  const Index S = static_cast<Index>(noisy.size());
  require_arg(S >= 1, "predict_noise: empty batch");
  require_arg(
    conds.size() == noisy.size() && steps.size() == noisy.size(),
    "predict_noise: batch, condition and step counts differ");
  for (Index s = 0; s < S; ++s) {
    const auto & x = noisy[s];
    require_arg(
      x.n_agents() == c.n_agents && x.horizon() == c.horizon_total && x.obs_dim() == c.obs_dim,
      "predict_noise: trajectory shape does not match network config");
    conds[s].validate(c.n_agents, c.horizon_total, c.obs_dim);
  }
  const Index N = c.n_agents;
  const int L = c.n_levels;

  // Conditioning embedding, one column per (agent, sample) sequence.
  const Var t_emb = embed_timestep(tape, steps);
  Matrix returns(1, N * S);
  std::vector<bool> null_cols(static_cast<std::size_t>(N * S));
  for (Index a = 0; a < N; ++a) {
    for (Index s = 0; s < S; ++s) {
      const bool is_null = conds[s].is_null;
      returns(0, a * S + s) = is_null ? 0.0 : conds[s].return_for(static_cast<int>(a));
      null_cols[a * S + s] = is_null;
    }
  }
  Var r_emb = ag::linear(
    tape.constant(std::move(returns)), param(tape, "embed/return.l1.w"), param(tape, "embed/return.l1.b"));
  r_emb = ag::linear(ag::mish(r_emb), param(tape, "embed/return.l2.w"), param(tape, "embed/return.l2.b"));
  r_emb = ag::select_cols(r_emb, param(tape, "embed/null"), null_cols);
  const Var emb = ag::add(ag::tile_cols(t_emb, N), r_emb);

  const Var x = tape.constant(pack_batch(noisy));
  const int G = unet_copies();
  const Index per_group = N / G;
  const Index nseq = per_group * S;

  std::vector<Var> hs(G);
  std::vector<Var> es(G);
  std::vector<std::vector<Var>> skips(G, std::vector<Var>(L));
  for (int g = 0; g < G; ++g) {
    hs[g] = G == 1 ? x : ag::slice_cols(x, g * nseq * c.length(0), nseq * c.length(0));
    es[g] = G == 1 ? emb : ag::slice_cols(emb, g * nseq, nseq);
  }

  for (int g = 0; g < G; ++g) {
    const std::string p = unet_prefix(c, g);
    Var h = hs[g];
    for (int l = 0; l < L; ++l) {
      const ag::SeqLayout lay{nseq, c.length(l)};
      const std::string e = p + "/enc" + std::to_string(l);
      h = res_block(tape, e + "/res0", h, es[g], lay);
      h = res_block(tape, e + "/res1", h, es[g], lay);
      skips[g][l] = h;
      if (l < L - 1) {
        h = ag::conv1d(h, param(tape, e + "/down.w"), param(tape, e + "/down.b"), lay, 3, 2, 1);
      }
    }
    const ag::SeqLayout lay{nseq, c.length(L - 1)};
    h = res_block(tape, p + "/mid/res0", h, es[g], lay);
    hs[g] = res_block(tape, p + "/mid/res1", h, es[g], lay);
  }

  for (int l = L - 1; l >= 0; --l) {
    const Index cols = nseq * c.length(l);
    std::vector<Var> fused(G);
    if (c.use_attention) {
      std::vector<Var> parts(G);
      for (int g = 0; g < G; ++g) {
        parts[g] = skips[g][l];
      }
      const Var all = G == 1 ? parts[0] : ag::concat_cols(parts);
      Var att = attention(tape, l, all, static_cast<int>(N));
      if (c.attention_residual) {
        att = ag::add(all, att);
      }
      for (int g = 0; g < G; ++g) {
        fused[g] = G == 1 ? att : ag::slice_cols(att, g * cols, cols);
      }
    } else {
      for (int g = 0; g < G; ++g) {
        fused[g] = skips[g][l];
      }
    }
    for (int g = 0; g < G; ++g) {
      const std::string d = unet_prefix(c, g) + "/dec" + std::to_string(l);
      const ag::SeqLayout lay{nseq, c.length(l)};
      Var h = ag::concat_rows(hs[g], fused[g]);
      h = res_block(tape, d + "/res0", h, es[g], lay);
      h = res_block(tape, d + "/res1", h, es[g], lay);
      if (l > 0) {
        h = ag::upsample_nearest(h, lay, 2);
        const ag::SeqLayout up{nseq, c.length(l - 1)};
        h = ag::conv1d(h, param(tape, d + "/up.w"), param(tape, d + "/up.b"), up, 3, 1, 1);
      }
      hs[g] = h;
    }
  }

  std::vector<Var> outs(G);
  for (int g = 0; g < G; ++g) {
    const std::string p = unet_prefix(c, g) + "/final";
    const ag::SeqLayout lay{nseq, c.length(0)};
    const int k = c.kernel_size;
    Var h = ag::conv1d(hs[g], param(tape, p + "/conv.w"), param(tape, p + "/conv.b"), lay, k, 1, k / 2);
    h = ag::mish(ag::group_norm(h, param(tape, p + "/gn.g"), param(tape, p + "/gn.b"), c.norm_groups, lay));
    outs[g] = ag::conv1d(h, param(tape, p + "/out.w"), param(tape, p + "/out.b"), lay, 1, 1, 0);
  }
  return G == 1 ? outs[0] : ag::concat_cols(outs);
}

// ---------------------------------------------------------------------------
// Gradient check

double grad_check(
  ag::ParamStore & params, const std::function<Var(ag::Tape &)> & loss_fn, int samples, double step,
  Rng & rng)
{
  require_arg(samples >= 1 && step > 0.0, "grad_check: need samples >= 1 and step > 0");
  params.zero_grad();
  {
    ag::Tape tape(true);
    const Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<std::pair<ag::Parameter *, Index>> entries;
  for (auto & [name, p] : params) {
    for (Index i = 0; i < p.value.size(); ++i) {
      entries.emplace_back(&p, i);
    }
  }
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), static_cast<std::size_t>(samples)));

  auto eval = [&]() {
    ag::Tape tape(false);
    return loss_fn(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (std::size_t idx : order) {
    auto [p, i] = entries[idx];
    const double analytic = p->grad.data()[i];
    const double orig = p->value.data()[i];
    p->value.data()[i] = orig + step;
    const double up = eval();
    p->value.data()[i] = orig - step;
    const double down = eval();
    p->value.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8));
  }
  return worst;
}

}  // namespace madiff::net
