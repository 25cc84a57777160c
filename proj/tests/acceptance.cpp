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


// Acceptance runner: one PASS/FAIL line per criterion.

#include "madiff/checkpoint.hpp"
#include "madiff/cli.hpp"
#include "madiff/planner.hpp"
#include "madiff/predictor_metrics.hpp"
#include "madiff/toy_envs.hpp"
#include "madiff/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace madiff;
namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

struct Verdict
{
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char * f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

net::NetConfig tiny_net(int n_agents, int obs_dim, int horizon)
{
  net::NetConfig c;
  c.obs_dim = obs_dim;
  c.n_agents = n_agents;
  c.horizon_total = horizon;
  c.base_channels = 8;
  c.n_levels = 2;
  c.n_heads = 2;
  c.time_embed_dim = 8;
  c.return_embed_dim = 8;
  c.kernel_size = 3;
  c.norm_groups = 4;
  return c;
}

// ---------------------------------------------------------------------------
// 1. Closed-form noising against the iterated one-step chain.

Verdict closed_form_noising()
{
  const auto t0 = Clock::now();
  const auto sched = diffusion::build_schedule(200, diffusion::ScheduleKind::cosine);
  Rng meta(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 200)(meta);
    Rng rng(meta());
    JointTrajectory tau0(3, 24, 14);
    fill_normal(tau0.values(), rng, 0.5);
    JointTrajectory x = tau0;
    JointTrajectory z(3, 24, 14);
    JointTrajectory noise_sum(3, 24, 14);
    double coef_sq = 0.0;
    for (int j = 1; j <= k; ++j) {
      const double alpha = sched.alpha_bar_at(j) / sched.alpha_bar_at(j - 1);
      fill_normal(z.values(), rng);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x.values()[i] = std::sqrt(alpha) * x.values()[i] + std::sqrt(1.0 - alpha) * z.values()[i];
        noise_sum.values()[i] = std::sqrt(alpha) * noise_sum.values()[i] + std::sqrt(1.0 - alpha) * z.values()[i];
      }
      coef_sq = alpha * coef_sq + (1.0 - alpha);
    }
    // Unit-variance noise built from the chain's own coefficients.
    JointTrajectory eps(3, 24, 14);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      eps.values()[i] = noise_sum.values()[i] / std::sqrt(coef_sq);
    }
    const auto closed = diffusion::forward_noise(tau0, k, eps, sched);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += std::pow(closed.values()[i] - x.values()[i], 2);
      den += x.values()[i] * x.values()[i];
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 10.0, "max_rel_err=" + fmt("%.3g", worst) + " seconds=" + fmt("%.2f", secs)};
}

// ---------------------------------------------------------------------------
// 2. Guidance identities.

JointTrajectory single_pass_chain(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched, const diffusion::SamplerParams & sp,
  const Condition & cond, bool use_null, Rng & rng)
{
  const auto & kv = cond.known_values;
  auto x = diffusion::sample_initial(kv.n_agents(), kv.horizon(), kv.obs_dim(), sp.temperature_scale, rng);
  std::vector<int> ks;
  if (sp.sampler_kind == diffusion::SamplerKind::ddim) {
    ks = diffusion::ddim_timesteps(sched.steps, sp.ddim_steps);
  } else {
    for (int k = sched.steps; k >= 1; --k) {
      ks.push_back(k);
    }
  }
  const Condition c = use_null ? cond.as_null() : cond;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    x = plan::condition_inpaint(x, cond);
    const int k = ks[i];
    auto eps = model.predict(std::span(&x, 1), std::span(&c, 1), std::span(&k, 1)).front();
    if (sp.clip_denoised) {
      eps = diffusion::clip_epsilon(x, k, eps, sched);
    }
    if (sp.sampler_kind == diffusion::SamplerKind::ddim) {
      x = diffusion::ddim_step(x, k, i + 1 < ks.size() ? ks[i + 1] : 0, eps, sched);
    } else {
      x = diffusion::denoise_step(x, k, eps, sched, sp.temperature_scale, rng);
    }
  }
  for (double & v : x.values()) {
    v = std::clamp(v, -1.0, 1.0);
  }
  return plan::condition_inpaint(x, cond);
}

Verdict guidance_identities()
{
  const auto t0 = Clock::now();
  const auto cfg = tiny_net(3, 4, 8);
  const net::Denoiser model(cfg, 2);
  const auto sched = diffusion::build_schedule(20);
  int checked = 0;
  int identical = 0;
  for (int seed = 0; seed < 5; ++seed) {
    Rng crng(100 + seed);
    Condition cond = Condition::empty(3, 8, 4);
    for (int a = 0; a < 3; ++a) {
      cond.set_known(a, 0, true);
      fill_normal(cond.known_values.row(a, 0), crng, 0.5);
    }
    cond.return_values = {0.9};
    for (auto kind : {diffusion::SamplerKind::ancestral, diffusion::SamplerKind::ddim}) {
      diffusion::SamplerParams sp;
      sp.sampler_kind = kind;
      sp.ddim_steps = 6;
      for (double omega : {0.0, 1.0}) {
        sp.guidance_scale = omega;
        Rng a(seed);
        Rng b(seed);
        const auto full = plan::sample_plan(model, sched, sp, cond, a);
        const auto ref = single_pass_chain(model, sched, sp, cond, omega == 0.0, b);
        ++checked;
        identical += full == ref ? 1 : 0;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {
    identical == checked && secs < 30.0,
    std::to_string(identical) + "/" + std::to_string(checked) + " chains bit-identical seconds=" + fmt("%.2f", secs)};
}

// ---------------------------------------------------------------------------
// 3. Permutation equivariance.

Verdict permutation_equivariance()
{
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int n : {2, 3, 5}) {
    net::NetConfig cfg = tiny_net(n, 5, 8);
    cfg.share_unet = true;
    cfg.use_attention = true;
    const net::Denoiser model(cfg, 40 + n);
    Rng rng(n);
    for (int trial = 0; trial < 50; ++trial) {
      JointTrajectory x(n, 8, 5);
      fill_normal(x.values(), rng);
      Condition cond = Condition::empty(n, 8, 5);
      cond.return_values.resize(static_cast<std::size_t>(n));
      for (double & r : cond.return_values) {
        r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      }
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      JointTrajectory px(n, 8, 5);
      Condition pc = cond;
      for (int a = 0; a < n; ++a) {
        for (int t = 0; t < 8; ++t) {
          std::copy(x.row(perm[a], t).begin(), x.row(perm[a], t).end(), px.row(a, t).begin());
        }
        pc.return_values[a] = cond.return_values[perm[a]];
      }
      const int k = std::uniform_int_distribution<int>(1, 100)(rng);
      const auto y = model.predict(std::span(&x, 1), std::span(&cond, 1), std::span(&k, 1)).front();
      const auto py = model.predict(std::span(&px, 1), std::span(&pc, 1), std::span(&k, 1)).front();
      for (int a = 0; a < n; ++a) {
        for (int t = 0; t < 8; ++t) {
          for (int d = 0; d < 5; ++d) {
            worst = std::max(worst, std::abs(py(a, t, d) - y(perm[a], t, d)));
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 60.0, "max_abs_err=" + fmt("%.3g", worst) + " seconds=" + fmt("%.2f", secs)};
}

// ---------------------------------------------------------------------------
// 4. Inpainting exactness in both execution modes.

Verdict inpainting_exactness()
{
  const int n = 3;
  const int d = 4;
  const auto cfg = tiny_net(n, d, 8);
  const net::Denoiser model(cfg, 7);
  invdyn::InvDynConfig ic;
  ic.obs_dim = d;
  ic.act_dim = 2;
  ic.n_agents = n;
  ic.hidden = 8;
  const invdyn::InverseDynamics id(ic, 1);
  data::NormStats stats;
  stats.obs_min.assign(d, -2.0);
  stats.obs_max.assign(d, 2.0);
  plan::PlanConfig pc;
  pc.history = 2;
  pc.horizon = 6;
  pc.sampler.sampler_kind = diffusion::SamplerKind::ddim;
  pc.sampler.ddim_steps = 5;
  const auto sched = diffusion::build_schedule(20);
  const plan::DiffusionPlanner planner(model, id, stats, sched, pc, n, d);
  long long entries = 0;
  long long mismatches = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto random_obs = [&] {
      env::JointObs o(n, std::vector<double>(d));
      for (auto & row : o) {
        fill_normal(row, rng, 0.7);
      }
      return o;
    };
    plan::HistoryBuffer hist(pc.history);
    hist.push(random_obs());
    hist.push(random_obs());
    const auto obs = random_obs();
    for (int agent = -1; agent < n; ++agent) {
      const Condition cond = planner.make_condition(obs, hist, agent);
      const auto out = plan::sample_plan(model, sched, pc.sampler, cond, rng);
      for (int a = 0; a < n; ++a) {
        for (int t = 0; t < cond.known_values.horizon(); ++t) {
          if (!cond.known(a, t)) {
            continue;
          }
          for (int k = 0; k < d; ++k) {
            ++entries;
            mismatches += out(a, t, k) == cond.known_values(a, t, k) ? 0 : 1;
          }
        }
      }
    }
  }
  return {
    mismatches == 0 && entries > 0,
    std::to_string(entries - mismatches) + "/" + std::to_string(entries) + " conditioned entries exact"};
}

// ---------------------------------------------------------------------------
// 5. Finite-difference gradients.

Verdict gradient_correctness()
{
  auto cfg = tiny_net(2, 3, 4);
  cfg.base_channels = 4;
  cfg.norm_groups = 2;
  net::Denoiser model(cfg, 11);
  const std::size_t count = model.params().scalar_count();
  Rng rng(12);
  std::vector<JointTrajectory> xs(2, JointTrajectory(2, 4, 3));
  for (auto & x : xs) {
    fill_normal(x.values(), rng);
  }
  std::vector<Condition> cs = {Condition::empty(2, 4, 3), Condition::empty(2, 4, 3)};
  cs[0].return_values = {0.4};
  cs[1] = cs[1].as_null();
  const std::vector<int> steps = {5, 120};
  JointTrajectory tgt(2, 4, 3);
  fill_normal(tgt.values(), rng);
  const ag::Matrix target = net::pack_batch(std::vector<JointTrajectory>{tgt, tgt});
  const ag::Matrix mask = ag::Matrix::Ones(target.rows(), target.cols());
  auto loss = [&](ag::Tape & tape) { return ag::masked_mse(model.forward(tape, xs, cs, steps), target, mask); };
  const double worst = net::grad_check(model.params(), loss, 50, 1e-4, rng);
  return {
    worst < 1e-3 && count <= 10000,
    "params=" + std::to_string(count) + " max_rel_err=" + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 6. Metric oracles.

Verdict metric_oracles()
{
  Rng rng(6);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0.0;
  auto dist = [](const JointTrajectory & p, const JointTrajectory & q, int a, int t) {
    return std::sqrt(std::pow(p(a, t, 0) - q(a, t, 0), 2) + std::pow(p(a, t, 1) - q(a, t, 1), 2));
  };
  for (int i = 0; i < 1000; ++i) {
    const int n = dim(rng);
    const int h = dim(rng);
    const int k = dim(rng);
    JointTrajectory truth(n, h, 3);
    fill_normal(truth.values(), rng);
    std::vector<JointTrajectory> preds(static_cast<std::size_t>(k), JointTrajectory(n, h, 3));
    for (auto & p : preds) {
      fill_normal(p.values(), rng);
    }
    double best_ade = 1e300;
    double best_fde = 1e300;
    for (int s = 0; s < k; ++s) {
      double a_sum = 0.0;
      double f_sum = 0.0;
      for (int a = 0; a < n; ++a) {
        for (int t = 0; t < h; ++t) {
          a_sum += dist(preds[s], truth, a, t);
        }
        f_sum += dist(preds[s], truth, a, h - 1);
      }
      const double ade = a_sum / (n * h);
      const double fde = f_sum / n;
      if (s == 0) {
        worst = std::max(worst, std::abs(metrics::ade(preds[0], truth) - ade));
        worst = std::max(worst, std::abs(metrics::fde(preds[0], truth) - fde));
      }
      best_ade = std::min(best_ade, ade);
      best_fde = std::min(best_fde, fde);
    }
    worst = std::max(worst, std::abs(metrics::min_ade(preds, truth, k) - best_ade));
    worst = std::max(worst, std::abs(metrics::min_fde(preds, truth, k) - best_fde));
  }
  const double score = metrics::normalized_score(516.8, 516.8, 159.8);
  return {
    worst < 1e-9 && score == 100.0,
    "max_abs_err=" + fmt("%.3g", worst) + " normalized_score=" + fmt("%.17g", score)};
}

// ---------------------------------------------------------------------------
// 7 and 8. End-to-end protocol on the toy environment.

constexpr int kTrainSteps = 15000;
constexpr int kEvalEpisodes = 100;
constexpr std::uint64_t kDataSeed = 2026;
constexpr std::uint64_t kEvalSeed = 777;

struct E2EContext
{
  fs::path work;
  env::SpreadConfig env;
  data::Dataset dataset;
  double mean_return = 0.0;
  double std_return = 0.0;
  double target = 0.0;
};

std::string slurp(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

E2EContext make_context(const fs::path & work)
{
  E2EContext c;
  c.work = work;
  fs::create_directories(work);
  const fs::path ds_path = work / "dataset.mads";
  if (!fs::exists(ds_path)) {
    env::generate_dataset_file(c.env, {1.0, 1.0, 1.0}, 300, kDataSeed, ds_path);
  }
  c.dataset = data::load_dataset(ds_path);
  std::vector<double> returns;
  for (const auto & e : c.dataset.episodes) {
    returns.push_back(data::compute_returns(e, 1.0).front());
  }
  c.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) {
    var += (r - c.mean_return) * (r - c.mean_return);
  }
  c.std_return = std::sqrt(var / static_cast<double>(returns.size()));
  c.target = data::percentile_return(c.dataset.episodes, 0.95, 1.0, data::ReturnOrigin::episode_start);
  return c;
}

train::TrainConfig protocol_train(std::uint64_t seed)
{
  train::TrainConfig tc;
  tc.learning_rate = 2e-4;
  tc.batch_size = 32;
  tc.cond_dropout = 0.25;
  tc.total_steps = kTrainSteps;
  tc.diffusion_steps = 200;
  tc.history = 0;
  tc.horizon = 24;
  tc.gamma = 1.0;
  tc.condition_mode = train::ConditionMode::decentralized;
  tc.return_origin = data::ReturnOrigin::episode_start;
  tc.train_bc = true;
  tc.seed = seed;
  return tc;
}

struct TrainedModel
{
  Checkpoint checkpoint;
  double train_seconds = 0.0;
  bool cached = false;
};

TrainedModel trained_model(const E2EContext & ctx, std::uint64_t seed, bool attention)
{
  const train::TrainConfig tc = protocol_train(seed);
  net::NetConfig nc;
  nc.obs_dim = ctx.dataset.meta.obs_dim;
  nc.n_agents = ctx.dataset.meta.n_agents;
  nc.horizon_total = tc.history + tc.horizon;
  nc.use_attention = attention;
  invdyn::InvDynConfig ic;
  ic.obs_dim = nc.obs_dim;
  ic.act_dim = ctx.dataset.meta.act_dim;
  ic.n_agents = nc.n_agents;
  const json key = {{"train", tc.to_json()}, {"net", nc.to_json()}, {"invdyn", ic.to_json()}};
  const fs::path dir = ctx.work / ("seed" + std::to_string(seed) + (attention ? "_attn" : "_indep"));
  const fs::path ckpt = dir / "checkpoint.madc";
  const fs::path meta = dir / "run.json";
  TrainedModel out;
  if (fs::exists(ckpt) && fs::exists(meta)) {
    const json m = json::parse(slurp(meta));
    if (m.at("key") == key) {
      out.checkpoint = load_checkpoint(ckpt);
      out.train_seconds = m.at("train_seconds").get<double>();
      out.cached = true;
      return out;
    }
  }
  const auto t0 = Clock::now();
  train::TrainOutputs to;
  to.out_dir = dir;
  auto res = train::train(ctx.dataset, tc, nc, ic, to);
  out.train_seconds = seconds_since(t0);
  out.checkpoint = std::move(res.checkpoint);
  std::ofstream(meta) << json{{"key", key}, {"train_seconds", out.train_seconds}}.dump(2);
  return out;
}

struct EvalResult
{
  double mean_return = 0.0;
  double consistency = 0.0;
};

EvalResult evaluate_planner(const E2EContext & ctx, const Checkpoint & ckpt)
{
  const plan::LoadedModel model(ckpt);
  plan::PlanConfig pc;
  pc.mode = plan::ExecMode::decentralized;
  pc.history = 0;
  pc.horizon = 24;
  pc.target_return = ctx.target;
  pc.sampler.sampler_kind = diffusion::SamplerKind::ddim;
  pc.sampler.ddim_steps = 15;
  const env::SpreadToyEnv env(ctx.env);
  const plan::DiffusionPlanner planner(
    model.denoiser, model.inverse_dynamics, model.stats, diffusion::build_schedule(200), pc,
    ctx.dataset.meta.n_agents, ctx.dataset.meta.obs_dim);
  plan::RolloutOptions ro;
  ro.log_plans = true;
  ro.plan_steps = {9};
  const auto rep = plan::rollout(env, planner, kEvalEpisodes, kEvalSeed, ro);
  EvalResult r;
  r.mean_return = rep.mean_return();
  const auto plans = metrics::plans_at_step(rep, 9);
  r.consistency = plans.empty() ? 0.0 : metrics::consistency_ratio(plans, 0.1);
  return r;
}

double evaluate_bc(const E2EContext & ctx, const Checkpoint & ckpt)
{
  const plan::LoadedModel model(ckpt);
  const plan::NextObsPolicy bc(*model.bc, model.inverse_dynamics, model.stats);
  return plan::rollout(env::SpreadToyEnv(ctx.env), bc, kEvalEpisodes, kEvalSeed).mean_return();
}

Verdict end_to_end(const fs::path & work)
{
  const E2EContext ctx = make_context(work);
  const TrainedModel m = trained_model(ctx, 1, true);
  const EvalResult ev = evaluate_planner(ctx, m.checkpoint);
  const double bc = evaluate_bc(ctx, m.checkpoint);
  const double margin = 0.5 * ctx.std_return;
  const bool a = ev.mean_return > ctx.mean_return + margin;
  const bool b = ev.mean_return > bc + margin;
  std::string detail = "madiff=" + fmt("%.3f", ev.mean_return) + " dataset_mean=" + fmt("%.3f", ctx.mean_return) +
                       " bc=" + fmt("%.3f", bc) + " margin=" + fmt("%.3f", margin) + " (a)=" + (a ? "ok" : "no") +
                       " (b)=" + (b ? "ok" : "no") + " train_seconds=" + fmt("%.0f", m.train_seconds) +
                       (m.cached ? " (cached)" : "");
  return {a && b, detail};
}

Verdict attention_ablation(const fs::path & work)
{
  const E2EContext ctx = make_context(work);
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const EvalResult with = evaluate_planner(ctx, trained_model(ctx, seed, true).checkpoint);
    const EvalResult without = evaluate_planner(ctx, trained_model(ctx, seed, false).checkpoint);
    const bool ok = with.mean_return > without.mean_return && with.consistency > without.consistency;
    all = all && ok;
    detail += "seed" + std::to_string(seed) + "[return " + fmt("%.3f", with.mean_return) + " vs " +
              fmt("%.3f", without.mean_return) + ", consistency " + fmt("%.2f", with.consistency) + " vs " +
              fmt("%.2f", without.consistency) + "] ";
  }
  detail.pop_back();
  return {all, detail};
}

// ---------------------------------------------------------------------------
// 9. Batched sampling scaling.

Verdict sampling_scaling()
{
  const auto t0 = Clock::now();
  const cli::BenchConfig bc;
  const auto rows = cli::bench_sampling(bc, 9);
  double lo = 1e300;
  double hi = 0.0;
  std::string detail;
  for (const auto & r : rows) {
    lo = std::min(lo, r.mean_ms);
    hi = std::max(hi, r.mean_ms);
    detail += "N=" + std::to_string(r.n_agents) + ":" + fmt("%.1f", r.mean_ms) + "ms ";
  }
  const double ratio = hi / lo;
  const double secs = seconds_since(t0);
  return {ratio < 2.0 && secs < 300.0, detail + "max_over_min=" + fmt("%.3f", ratio) + " seconds=" + fmt("%.0f", secs)};
}

// ---------------------------------------------------------------------------
// 10. Determinism of checkpoints and rollout reports.

Verdict determinism(const fs::path & work)
{
  const json config = {
    {"data", {{"episodes", 30}}},
    {"train", {{"total_steps", 40}, {"batch_size", 8}, {"horizon", 8}, {"diffusion_steps", 50}, {"train_bc", true}}},
    {"plan", {{"ddim_steps", 5}}},
    {"rollout", {{"episodes", 6}, {"log_plans", true}}}};
  const fs::path dir = work / "determinism";
  json c = config;
  c["out_dir"] = dir.string();
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << c.dump();
    for (const char * cmd : {"gen-data", "train", "rollout"}) {
      const std::vector<std::string> args = {"madiff", cmd, "--seed", "13", "--config", (dir / "config.json").string()};
      std::vector<const char *> argv;
      for (const auto & a : args) {
        argv.push_back(a.c_str());
      }
      std::ostringstream out;
      std::ostringstream err;
      if (cli::run(static_cast<int>(argv.size()), argv.data(), out, err) != 0) {
        return {false, std::string(cmd) + " failed: " + err.str()};
      }
    }
    runs.push_back(
      {{"dataset", slurp(dir / "dataset.mads")},
       {"checkpoint", slurp(dir / "checkpoint.madc")},
       {"rollout report", slurp(dir / "rollout.json")}});
  }
  bool all = true;
  std::string detail;
  for (const auto & [name, bytes] : runs[0]) {
    const bool same = !bytes.empty() && bytes == runs[1].at(name);
    all = all && same;
    detail += name + (same ? " identical, " : " differs, ");
  }
  detail.resize(detail.size() - 2);
  return {all, detail};
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> selected;
  std::string work = "acceptance_work";
  app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", work, "Directory for end-to-end artifacts");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    selected = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  }

  const fs::path work_dir(work);
  const std::map<int, std::function<Verdict()>> criteria = {
    {1, closed_form_noising},
    {2, guidance_identities},
    {3, permutation_equivariance},
    {4, inpainting_exactness},
    {5, gradient_correctness},
    {6, metric_oracles},
    {7, [&] { return end_to_end(work_dir); }},
    {8, [&] { return attention_ablation(work_dir); }},
    {9, sampling_scaling},
    {10, [&] { return determinism(work_dir); }}};

  int failed = 0;
  for (int id : selected) {
    Verdict v;
    try {
      v = criteria.at(id)();
    } catch (const std::exception & e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
