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

#include "madiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace madiff::train
{

using ag::Matrix;

ConditionMode parse_condition_mode(const std::string & s)
{
  if (s == "centralized") {
    return ConditionMode::centralized;
  }
  if (s == "decentralized") {
    return ConditionMode::decentralized;
  }
  if (s == "mixed") {
    return ConditionMode::mixed;
  }
  throw std::invalid_argument("unknown condition mode '" + s + "'");
}

std::string to_string(ConditionMode mode)
{
  switch (mode) {
    case ConditionMode::centralized:
      return "centralized";
    case ConditionMode::decentralized:
      return "decentralized";
    case ConditionMode::mixed:
      return "mixed";
  }
  return "unknown";
}

void TrainConfig::validate() const
{
  require_arg(learning_rate >= 0.0, "train.learning_rate must be >= 0");
  require_arg(batch_size >= 1, "train.batch_size must be >= 1");
  require_arg(cond_dropout >= 0.0 && cond_dropout <= 1.0, "train.cond_dropout must lie in [0, 1]");
  require_arg(total_steps >= 0, "train.total_steps must be >= 0");
  require_arg(checkpoint_interval >= 0, "train.checkpoint_interval must be >= 0");
  require_arg(!ema_decay || (*ema_decay >= 0.0 && *ema_decay < 1.0), "train.ema_decay must lie in [0, 1)");
  require_arg(gamma > 0.0 && gamma <= 1.0, "train.gamma must lie in (0, 1]");
  require_arg(history >= 0, "train.history must be >= 0");
  require_arg(horizon >= 2, "train.horizon must be >= 2");
  require_arg(diffusion_steps >= 1, "train.diffusion_steps must be >= 1");
  require_arg(!return_scale || *return_scale > 0.0, "train.return_scale must be > 0");
  require_arg(num_workers >= 1, "train.num_workers must be >= 1");
  sampler.validate(diffusion_steps);
}

nlohmann::json TrainConfig::to_json() const
{
  nlohmann::json j = {
    {"learning_rate", learning_rate},
    {"batch_size", batch_size},
    {"cond_dropout", cond_dropout},
    {"total_steps", total_steps},
    {"checkpoint_interval", checkpoint_interval},
    {"ema_decay", ema_decay ? nlohmann::json(*ema_decay) : nlohmann::json()},
    {"seed", seed},
    {"gamma", gamma},
    {"history", history},
    {"horizon", horizon},
    {"diffusion_steps", diffusion_steps},
    {"schedule", diffusion::to_string(schedule)},
    {"condition_mode", to_string(condition_mode)},
    {"return_origin", data::to_string(return_origin)},
    {"return_scale", return_scale ? nlohmann::json(*return_scale) : nlohmann::json()},
    {"return_offset", return_offset ? nlohmann::json(*return_offset) : nlohmann::json()},
    {"adam_beta1", adam_beta1},
    {"adam_beta2", adam_beta2},
    {"adam_eps", adam_eps},
    {"train_bc", train_bc}};
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json & j)
{
  TrainConfig c;
  auto opt = [&](const char * key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) {
      return std::nullopt;
    }
    return j.at(key).get<double>();
  };
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.cond_dropout = j.value("cond_dropout", c.cond_dropout);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.ema_decay = opt("ema_decay");
  c.seed = j.value("seed", c.seed);
  c.gamma = j.value("gamma", c.gamma);
  c.history = j.value("history", c.history);
  c.horizon = j.value("horizon", c.horizon);
  c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
  c.schedule = diffusion::parse_schedule_kind(j.value("schedule", std::string("cosine")));
  c.condition_mode = parse_condition_mode(j.value("condition_mode", std::string("mixed")));
  c.return_origin = data::parse_return_origin(j.value("return_origin", std::string("window_start")));
  c.return_scale = opt("return_scale");
  c.return_offset = opt("return_offset");
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.train_bc = j.value("train_bc", c.train_bc);
  return c;
}

DiffusionBatch prepare_diffusion_batch(
  std::span<const JointTrajectory> windows, std::span<const Condition> conds,
  const diffusion::DiffusionSchedule & sched, double dropout, Rng & rng)
{
  require_arg(!windows.empty(), "diffusion_loss: empty batch");
  require_arg(windows.size() == conds.size(), "diffusion_loss: one condition per window required");
  require_arg(dropout >= 0.0 && dropout <= 1.0, "diffusion_loss: dropout must lie in [0, 1]");
  const int n = windows.front().n_agents();
  const int len = windows.front().horizon();
  const int d = windows.front().obs_dim();
  const auto S = static_cast<ag::Index>(windows.size());

  DiffusionBatch b;
  b.clean.assign(windows.begin(), windows.end());
  b.loss_mask = Matrix::Ones(d, n * S * len);
  std::uniform_int_distribution<int> step_dist(1, sched.steps);
  std::bernoulli_distribution drop(dropout);
  for (ag::Index s = 0; s < S; ++s) {
    const JointTrajectory & x0 = windows[s];
    require_arg(
      x0.n_agents() == n && x0.horizon() == len && x0.obs_dim() == d, "diffusion_loss: window shape mismatch");
    conds[s].validate(n, len, d);
    const int k = step_dist(rng);
    JointTrajectory eps(n, len, d);
    fill_normal(eps.values(), rng);
    JointTrajectory noisy = diffusion::forward_noise(x0, k, eps, sched);
    for (int a = 0; a < n; ++a) {
      for (int t = 0; t < len; ++t) {
        if (conds[s].known(a, t)) {
          const auto src = conds[s].known_values.row(a, t);
          std::copy(src.begin(), src.end(), noisy.row(a, t).begin());
          b.loss_mask.col((a * S + s) * len + t).setZero();
        }
      }
    }
    Condition c = drop(rng) ? conds[s].as_null() : conds[s];
    b.steps.push_back(k);
    b.noise.push_back(std::move(eps));
    b.noisy.push_back(std::move(noisy));
    b.conds.push_back(std::move(c));
  }
  return b;
}

ag::Var diffusion_loss(ag::Tape & tape, const net::NoiseModel & model, const DiffusionBatch & batch)
{
  const ag::Var pred = model.forward(tape, batch.noisy, batch.conds, batch.steps);
  return ag::masked_mse(pred, net::pack_batch(batch.noise), batch.loss_mask);
}

double diffusion_loss(
  const net::NoiseModel & model, std::span<const JointTrajectory> windows, std::span<const Condition> conds,
  const diffusion::DiffusionSchedule & sched, double dropout, Rng & rng)
{
  const DiffusionBatch batch = prepare_diffusion_batch(windows, conds, sched, dropout, rng);
  ag::Tape tape(false);
  return diffusion_loss(tape, model, batch).value()(0, 0);
}

void ema_update(const ag::ParamStore & params, ag::ParamStore & shadow, double decay)
{
  require_arg(decay >= 0.0 && decay < 1.0, "ema_update: decay must lie in [0, 1)");
  require_arg(params.size() == shadow.size(), "ema_update: parameter sets differ");
  for (const auto & [name, p] : params) {
    require_arg(shadow.contains(name), "ema_update: missing shadow parameter " + name);
    Matrix & s = shadow.at(name).value;
    require_arg(
      s.rows() == p.value.rows() && s.cols() == p.value.cols(), "ema_update: shape mismatch for " + name);
    s = decay * s + (1.0 - decay) * p.value;
  }
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
: lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
{
  require_arg(lr >= 0.0, "Adam: learning rate must be >= 0");
}

void Adam::step(std::span<ag::ParamStore * const> stores)
{
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (ag::ParamStore * store : stores) {
    for (auto & [name, p] : *store) {
      if (p.grad.size() == 0) {
        continue;
      }
      Moments & mom = state_[{store, name}];
      if (mom.m.size() == 0) {
        mom.m = Matrix::Zero(p.value.rows(), p.value.cols());
        mom.v = Matrix::Zero(p.value.rows(), p.value.cols());
      }
      mom.m = beta1_ * mom.m + (1.0 - beta1_) * p.grad;
      mom.v = beta2_ * mom.v + (1.0 - beta2_) * p.grad.cwiseAbs2();
      p.value.array() -= lr_ * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + eps_);
    }
  }
}

WindowSampler::WindowSampler(
  const data::Dataset & dataset, const data::WindowSpec & spec, const data::NormStats & stats,
  ConditionMode mode)
: dataset_(dataset), spec_(spec), stats_(stats), mode_(mode)
{
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e) {
    for (int t = 0; t < dataset.episodes[e].length(); ++t) {
      index_.emplace_back(static_cast<int>(e), t);
    }
  }
  require_arg(!index_.empty(), "window sampler: dataset has no steps");
}

data::Window WindowSampler::draw(Rng & rng) const
{
  const auto [e, t] = index_[std::uniform_int_distribution<std::size_t>(0, index_.size() - 1)(rng)];
  const int n = dataset_.meta.n_agents;
  int agent = -1;
  if (mode_ == ConditionMode::decentralized) {
    agent = std::uniform_int_distribution<int>(0, n - 1)(rng);
  } else if (mode_ == ConditionMode::mixed && std::bernoulli_distribution(0.5)(rng)) {
    agent = std::uniform_int_distribution<int>(0, n - 1)(rng);
  }
  return data::sample_window(dataset_.episodes[e], t, spec_, stats_, agent);
}

std::vector<invdyn::Transition> window_transitions(std::span<const data::Window> windows, int history)
{
  std::vector<invdyn::Transition> out;
  for (const data::Window & w : windows) {
    const int n = w.traj.n_agents();
    const int len = w.traj.horizon();
    require_arg(history + 1 < len, "window_transitions: window too short");
    const std::size_t a_dim = w.actions.size() / (static_cast<std::size_t>(n) * len);
    for (int i = 0; i < n; ++i) {
      const std::size_t pos = static_cast<std::size_t>(i) * len + history;
      if (!w.action_ok[pos]) {
        continue;
      }
      invdyn::Transition tr;
      tr.agent = i;
      const auto o = w.traj.row(i, history);
      const auto o2 = w.traj.row(i, history + 1);
      tr.obs.assign(o.begin(), o.end());
      tr.next_obs.assign(o2.begin(), o2.end());
      tr.action.assign(w.actions.begin() + pos * a_dim, w.actions.begin() + (pos + 1) * a_dim);
      tr.action_id = static_cast<int>(tr.action.front());
      out.push_back(std::move(tr));
    }
  }
  return out;
}

data::NormStats training_stats(const data::Dataset & dataset, const TrainConfig & config)
{
  data::NormStats s = data::compute_norm_stats(dataset.episodes, config.gamma, config.return_origin);
  if (config.return_scale) {
    s.return_scale = *config.return_scale;
  }
  if (config.return_offset) {
    s.return_offset = *config.return_offset;
  }
  s.validate();
  return s;
}

namespace
{

void append_csv(const std::filesystem::path & path, const LossRow & row)
{
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  if (fresh) {
    out << "step,diffusion_loss,id_loss,wall_ms\n";
  }
  char buf[160];
  std::snprintf(
    buf, sizeof(buf), "%d,%.9g,%.9g,%.3f\n", row.step, row.diffusion_loss, row.id_loss, row.wall_ms);
  out << buf;
}

std::vector<data::Window> draw_windows(
  const WindowSampler & sampler, std::uint64_t step_seed, int count, int workers)
{
  std::vector<data::Window> out(static_cast<std::size_t>(count));
  auto work = [&](int w, int stride) {
    for (int i = w; i < count; i += stride) {
      Rng rng(derive_seed(step_seed, static_cast<std::uint64_t>(i)));
      out[i] = sampler.draw(rng);
    }
  };
  const int threads = std::min(workers, count);
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back(work, w, threads);
  }
  for (auto & th : pool) {
    th.join();
  }
  return out;
}

}  // namespace

TrainResult train(
  const data::Dataset & dataset, const TrainConfig & config, const net::NetConfig & net_config,
  const invdyn::InvDynConfig & invdyn_config, const TrainOutputs & outputs)
{
  config.validate();
  net_config.validate();
  invdyn_config.validate();
  require_arg(!dataset.episodes.empty(), "train: dataset is empty");
  const auto & meta = dataset.meta;
  require_arg(
    net_config.obs_dim == meta.obs_dim && net_config.n_agents == meta.n_agents,
    "train: net config does not match dataset dimensions");
  require_arg(
    net_config.horizon_total == config.history + config.horizon,
    "train: net.horizon_total must equal train.history + train.horizon");
  require_arg(
    invdyn_config.obs_dim == meta.obs_dim && invdyn_config.n_agents == meta.n_agents &&
      invdyn_config.act_kind == meta.act_kind && invdyn_config.input_dim() == 2 * meta.obs_dim,
    "train: inverse dynamics config does not match dataset");
  require_arg(
    meta.act_kind == ActionKind::discrete || invdyn_config.act_dim == meta.act_dim,
    "train: inverse dynamics action width does not match dataset");

  const data::NormStats stats = training_stats(dataset, config);
  const auto sched = diffusion::build_schedule(config.diffusion_steps, config.schedule);
  const data::WindowSpec spec{config.history, config.horizon, config.gamma, config.return_origin};
  const WindowSampler sampler(dataset, spec, stats, config.condition_mode);

  net::Denoiser denoiser(net_config, derive_seed(config.seed, 101));
  invdyn::InverseDynamics id(invdyn_config, derive_seed(config.seed, 102));
  std::optional<ag::ParamStore> shadow;
  if (config.ema_decay) {
    shadow = denoiser.params();
  }
  invdyn::InvDynConfig bc_config = invdyn_config;
  bc_config.act_kind = ActionKind::continuous;
  bc_config.act_dim = meta.obs_dim;
  bc_config.input_width = meta.obs_dim;
  std::optional<invdyn::InverseDynamics> bc;
  if (config.train_bc) {
    bc.emplace(bc_config, derive_seed(config.seed, 103));
  }

  std::vector<double> quantiles;
  for (int q = 0; q <= 100; ++q) {
    quantiles.push_back(data::percentile_return(dataset.episodes, q / 100.0, config.gamma, config.return_origin));
  }

  Adam adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  Adam bc_adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  ag::ParamStore * stores[2] = {&denoiser.params(), &id.params()};

  TrainResult result;
  std::optional<std::filesystem::path> csv;
  if (outputs.out_dir) {
    std::filesystem::create_directories(*outputs.out_dir);
    csv = *outputs.out_dir / "loss.csv";
    std::filesystem::remove(*csv);
  }

  auto snapshot = [&](int step) {
    Checkpoint ck;
    ck.net = net_config;
    ck.invdyn = invdyn_config;
    ck.stats = stats;
    ck.train = config.to_json();
    ck.dataset = {
      {"n_agents", meta.n_agents},
      {"obs_dim", meta.obs_dim},
      {"act_dim", meta.act_dim},
      {"episodes", dataset.episodes.size()},
      {"extra", meta.extra}};
    ck.step = step;
    ck.train["return_quantiles"] = quantiles;
    ck.denoiser = shadow ? *shadow : denoiser.params();
    ck.invdyn_params = id.params();
    if (bc) {
      ck.bc = bc_config;
      ck.bc_params = bc->params();
    }
    return ck;
  };

  for (int step = 1; step <= config.total_steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(step));
    const auto windows = draw_windows(sampler, step_seed, config.batch_size, config.num_workers);

    std::vector<JointTrajectory> clean;
    std::vector<Condition> conds;
    for (const auto & w : windows) {
      clean.push_back(w.traj);
      conds.push_back(w.cond);
    }
    Rng noise_rng(derive_seed(step_seed, 1ull << 40));
    const DiffusionBatch batch = prepare_diffusion_batch(clean, conds, sched, config.cond_dropout, noise_rng);
    const auto transitions = window_transitions(windows, config.history);

    denoiser.params().zero_grad();
    id.params().zero_grad();
    ag::Tape tape(true);
    const ag::Var ld = diffusion_loss(tape, denoiser, batch);
    const ag::Var li = id.loss(tape, transitions);
    const double dl = ld.value()(0, 0);
    const double il = li.value()(0, 0);
    if (!std::isfinite(dl) || !std::isfinite(il)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (diffusion " << dl << ", inverse dynamics " << il << ")";
      throw std::runtime_error(msg.str());
    }
    tape.backward(ag::add(ld, li));
    adam.step(stores);
    if (shadow) {
      ema_update(denoiser.params(), *shadow, *config.ema_decay);
    }

    if (bc) {
      std::vector<invdyn::Transition> bc_batch = transitions;
      for (auto & tr : bc_batch) {
        tr.action = tr.next_obs;
      }
      bc->params().zero_grad();
      ag::Tape bc_tape(true);
      const ag::Var lb = bc->loss(bc_tape, bc_batch);
      if (!std::isfinite(lb.value()(0, 0))) {
        throw std::runtime_error("non-finite behaviour cloning loss at step " + std::to_string(step));
      }
      bc_tape.backward(lb);
      ag::ParamStore * bc_stores[1] = {&bc->params()};
      bc_adam.step(bc_stores);
    }

    LossRow row;
    row.step = step;
    row.diffusion_loss = dl;
    row.id_loss = il;
    row.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (csv) {
      append_csv(*csv, row);
    }
    if (outputs.on_step) {
      outputs.on_step(row);
    }
    if (outputs.out_dir && config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%07d.madc", step);
      const auto path = *outputs.out_dir / "checkpoints" / name;
      save_checkpoint(path, snapshot(step));
      result.checkpoint_paths.push_back(path);
    }
  }

  result.checkpoint = snapshot(config.total_steps);
  if (outputs.out_dir) {
    const auto path = *outputs.out_dir / "checkpoint.madc";
    save_checkpoint(path, result.checkpoint);
    result.checkpoint_paths.push_back(path);
  }
  return result;
}

}  // namespace madiff::train
