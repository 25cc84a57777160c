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

#include "madiff/cli.hpp"

#include "madiff/checkpoint.hpp"
#include "madiff/dataset.hpp"
#include "madiff/predictor_metrics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace madiff::cli
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

std::string type_name(const json & v)
{
  if (v.is_number()) {
    return "number";
  }
  return v.type_name();
}

json merge_at(const json & defaults, const json & user, const std::string & path)
{
  if (defaults.is_object()) {
    if (!user.is_object()) {
      throw ConfigError(path, "expected an object, got " + type_name(user));
    }
    json out = defaults;
    for (const auto & [key, value] : user.items()) {
      const std::string child = path.empty() ? key : path + "." + key;
      if (!defaults.contains(key)) {
        throw ConfigError(child, "unknown field");
      }
      out[key] = merge_at(defaults.at(key), value, child);
    }
    return out;
  }
  if (defaults.is_null()) {
    if (user.is_object() || user.is_array()) {
      throw ConfigError(path, "expected a scalar or null, got " + type_name(user));
    }
    return user;
  }
  if (defaults.is_number()) {
    if (!user.is_number()) {
      throw ConfigError(path, "expected a number, got " + type_name(user));
    }
    if (defaults.is_number_integer() && !user.is_number_integer()) {
      throw ConfigError(path, "expected an integer");
    }
    return user;
  }
  if (type_name(defaults) != type_name(user)) {
    throw ConfigError(path, "expected " + type_name(defaults) + ", got " + type_name(user));
  }
  return user;
}

/// Re-labels validation failures of one section with the offending field path.
template <typename Fn>
auto with_path(const std::string & section, Fn && fn)
{
  try {
    return fn();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::exception & e) {
    std::string msg = e.what();
    std::string path = section;
    const auto space = msg.find(' ');
    if (msg.rfind(section + ".", 0) == 0 && space != std::string::npos) {
      path = msg.substr(0, space);
      msg = msg.substr(space + 1);
    }
    throw ConfigError(path, msg);
  }
}

std::optional<double> opt_number(const json & j, const char * key)
{
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::nullopt;
  }
  return j.at(key).get<double>();
}

void write_json(const fs::path & path, const json & doc, int indent = 2)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << doc.dump(indent) << '\n';
}

void require_file(const fs::path & path, const std::string & field)
{
  if (path.empty()) {
    throw ConfigError(field, "a path is required");
  }
  if (!fs::exists(path)) {
    throw ConfigError(field, "file not found: " + path.string());
  }
}

int num_workers_from_env()
{
  const char * raw = std::getenv("MADIFF_NUM_WORKERS");
  if (raw == nullptr || *raw == '\0') {
    return 1;
  }
  char * end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) {
    throw ConfigError("MADIFF_NUM_WORKERS", "must be a positive integer");
  }
  return static_cast<int>(v);
}

double quantile_target(const Checkpoint & ckpt, double percentile)
{
  const auto & q = ckpt.train.at("return_quantiles");
  const auto n = q.size();
  if (n == 0) {
    throw std::runtime_error("checkpoint carries no return quantiles; set plan.target_return");
  }
  const double pos = percentile * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double a = q.at(lo).get<double>();
  const double b = q.at(hi).get<double>();
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

plan::PlanConfig plan_for(const RunConfig & rc, const Checkpoint & ckpt)
{
  plan::PlanConfig pc = rc.plan;
  pc.history = ckpt.train.value("history", 0);
  pc.horizon = ckpt.train.value("horizon", ckpt.net.horizon_total);
  pc.target_return = rc.target_return ? *rc.target_return : quantile_target(ckpt, rc.target_percentile);
  return pc;
}

void check_env_matches(const env::SpreadConfig & ec, const Checkpoint & ckpt)
{
  require_arg(
    ec.n_agents == ckpt.net.n_agents && ec.obs_dim() == ckpt.net.obs_dim,
    "environment dimensions do not match the checkpoint (n_agents " + std::to_string(ec.n_agents) + " vs " +
      std::to_string(ckpt.net.n_agents) + ")");
}

struct DatasetSummary
{
  double mean = 0.0;
  double std = 0.0;
  std::map<std::string, double> tag_mean;
};

DatasetSummary summarize(const data::Dataset & ds)
{
  DatasetSummary s;
  std::map<std::string, int> counts;
  std::vector<double> totals;
  for (const auto & ep : ds.episodes) {
    double r = 0.0;
    for (float v : ep.rewards) {
      r += v;
    }
    totals.push_back(r);
    s.tag_mean[ep.tag] += r;
    ++counts[ep.tag];
  }
  for (auto & [tag, v] : s.tag_mean) {
    v /= counts[tag];
  }
  if (!totals.empty()) {
    for (double r : totals) {
      s.mean += r;
    }
    s.mean /= static_cast<double>(totals.size());
    for (double r : totals) {
      s.std += (r - s.mean) * (r - s.mean);
    }
    s.std = std::sqrt(s.std / static_cast<double>(totals.size()));
  }
  return s;
}

int cmd_gen_data(const RunConfig & rc, std::ostream & out)
{
  const auto ds = env::generate_dataset(rc.env, rc.mix, rc.data_episodes, rc.seed, rc.scripted);
  data::save_dataset(rc.dataset_path, ds);
  const auto s = summarize(ds);
  out << json{{"dataset", rc.dataset_path.string()}, {"episodes", ds.episodes.size()}, {"mean_return", s.mean}}.dump()
      << '\n';
  return 0;
}

int cmd_train(const RunConfig & rc, std::ostream & out)
{
  const auto ds = data::load_dataset(rc.dataset_path);
  net::NetConfig nc = rc.net;
  nc.obs_dim = ds.meta.obs_dim;
  nc.n_agents = ds.meta.n_agents;
  nc.horizon_total = rc.train.history + rc.train.horizon;
  invdyn::InvDynConfig ic = rc.invdyn;
  ic.obs_dim = ds.meta.obs_dim;
  ic.act_dim = ds.meta.act_dim;
  ic.act_kind = ds.meta.act_kind;
  ic.n_agents = ds.meta.n_agents;
  train::TrainOutputs outputs;
  outputs.out_dir = rc.out_dir;
  const auto result = train::train(ds, rc.train, nc, ic, outputs);
  json summary = {{"checkpoint", (rc.out_dir / "checkpoint.madc").string()}, {"steps", result.log.size()}};
  if (!result.log.empty()) {
    summary["final_diffusion_loss"] = result.log.back().diffusion_loss;
    summary["final_id_loss"] = result.log.back().id_loss;
  }
  out << summary.dump() << '\n';
  return 0;
}

int cmd_rollout(const RunConfig & rc, std::ostream & out)
{
  const Checkpoint ckpt = load_checkpoint(rc.checkpoint_path);
  check_env_matches(rc.env, ckpt);
  const plan::LoadedModel model(ckpt);
  const plan::PlanConfig pc = plan_for(rc, ckpt);
  const plan::DiffusionPlanner planner(
    model.denoiser, model.inverse_dynamics, model.stats,
    diffusion::build_schedule(ckpt.train.value("diffusion_steps", 200),
                              diffusion::parse_schedule_kind(ckpt.train.value("schedule", std::string("cosine")))),
    pc, ckpt.net.n_agents, ckpt.net.obs_dim);
  const env::SpreadToyEnv env(rc.env);
  plan::RolloutOptions opts;
  opts.log_plans = rc.rollout_log_plans;
  opts.batch = rc.rollout_batch;
  const auto report = plan::rollout(env, planner, rc.rollout_episodes, rc.seed, opts);
  json echo = rc.resolved;
  echo["resolved_plan"] = pc.to_json();
  write_json(rc.out_dir / "rollout.json", report.to_json(echo, rc.rollout_log_plans));
  write_json(rc.out_dir / "rollout_timings.json", report.timings_json());
  out << json{{"report", (rc.out_dir / "rollout.json").string()},
              {"episodes", report.episodes.size()},
              {"mean_return", report.mean_return()}}
           .dump()
      << '\n';
  return 0;
}

std::vector<data::Episode> prediction_episodes(const RunConfig & rc)
{
  if (rc.predict_dataset) {
    return data::load_dataset(*rc.predict_dataset).episodes;
  }
  env::PolicyMix mix;  // expert-only evaluation tracks
  return env::generate_dataset(rc.env, mix, rc.predict_episodes, derive_seed(rc.seed, 17), rc.scripted).episodes;
}

int cmd_predict(const RunConfig & rc, std::ostream & out)
{
  const Checkpoint ckpt = load_checkpoint(rc.checkpoint_path);
  const plan::LoadedModel model(ckpt);
  const int C = ckpt.train.value("history", 0);
  const int H = ckpt.train.value("horizon", ckpt.net.horizon_total);
  require_arg(C >= 1, "predict needs a checkpoint trained with history >= 1");
  const auto episodes = prediction_episodes(rc);
  const auto sched = diffusion::build_schedule(
    ckpt.train.value("diffusion_steps", 200),
    diffusion::parse_schedule_kind(ckpt.train.value("schedule", std::string("cosine"))));
  Rng rng(rc.seed);
  double ade = 0.0;
  double fde = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  int used = 0;
  for (const auto & ep : episodes) {
    require_arg(
      ep.n_agents == ckpt.net.n_agents && ep.obs_dim == ckpt.net.obs_dim, "prediction episodes do not match the model");
    if (ep.length() + 1 < C + H) {
      continue;
    }
    metrics::PredictionRequest req;
    req.history = JointTrajectory(ep.n_agents, C, ep.obs_dim);
    req.horizon = H;
    req.samples = rc.predict_samples;
    JointTrajectory truth(ep.n_agents, H, ep.obs_dim);
    for (int a = 0; a < ep.n_agents; ++a) {
      for (int d = 0; d < ep.obs_dim; ++d) {
        for (int t = 0; t < C; ++t) {
          req.history(a, t, d) = ep.obs_at(t, a, d);
        }
        for (int t = 0; t < H; ++t) {
          truth(a, t, d) = ep.obs_at(C + t, a, d);
        }
      }
    }
    const auto preds = metrics::predict(model.denoiser, sched, rc.plan.sampler, model.stats, req, rng);
    ade += metrics::ade(preds.front(), truth);
    fde += metrics::fde(preds.front(), truth);
    const int k = std::min(rc.predict_min_k, static_cast<int>(preds.size()));
    min_ade += metrics::min_ade(preds, truth, k, rc.predict_per_agent);
    min_fde += metrics::min_fde(preds, truth, k, rc.predict_per_agent);
    if (used == 0) {
      metrics::write_trajectory_svg(rc.out_dir / "prediction.svg", truth, preds);
    }
    ++used;
  }
  require_arg(used > 0, "no evaluation episode is long enough for history + horizon");
  const std::string k = std::to_string(rc.predict_min_k);
  const std::vector<metrics::MetricRow> rows = {
    {"ade", "eval", ade / used, used, rc.seed},
    {"fde", "eval", fde / used, used, rc.seed},
    {"min_ade_" + k, "eval", min_ade / used, used, rc.seed},
    {"min_fde_" + k, "eval", min_fde / used, used, rc.seed}};
  metrics::write_metrics_csv(rc.out_dir / "metrics.csv", rows);
  json summary;
  for (const auto & r : rows) {
    summary[r.metric] = r.value;
  }
  out << summary.dump() << '\n';
  return 0;
}

int cmd_eval(const RunConfig & rc, std::ostream & out)
{
  const Checkpoint ckpt = load_checkpoint(rc.checkpoint_path);
  check_env_matches(rc.env, ckpt);
  const auto ds = data::load_dataset(rc.dataset_path);
  const auto summary = summarize(ds);
  const plan::LoadedModel model(ckpt);
  const plan::PlanConfig pc = plan_for(rc, ckpt);
  const plan::DiffusionPlanner planner(
    model.denoiser, model.inverse_dynamics, model.stats,
    diffusion::build_schedule(ckpt.train.value("diffusion_steps", 200),
                              diffusion::parse_schedule_kind(ckpt.train.value("schedule", std::string("cosine")))),
    pc, ckpt.net.n_agents, ckpt.net.obs_dim);
  const env::SpreadToyEnv env(rc.env);
  plan::RolloutOptions opts;
  opts.log_plans = pc.mode == plan::ExecMode::decentralized;
  opts.plan_steps = {rc.consistency_step};
  opts.batch = rc.rollout_batch;
  const auto report = plan::rollout(env, planner, rc.eval_episodes, rc.seed, opts);

  std::vector<metrics::MetricRow> rows;
  const long long n = rc.eval_episodes;
  rows.push_back({"mean_return_madiff", "eval", report.mean_return(), n, rc.seed});
  rows.push_back({"dataset_mean_return", "dataset", summary.mean, static_cast<long long>(ds.episodes.size()), rc.seed});
  rows.push_back({"dataset_return_std", "dataset", summary.std, static_cast<long long>(ds.episodes.size()), rc.seed});
  const bool has_refs = summary.tag_mean.count("expert") && summary.tag_mean.count("random") &&
                        summary.tag_mean.at("expert") != summary.tag_mean.at("random");
  if (has_refs) {
    rows.push_back(
      {"normalized_score_madiff", "eval",
       metrics::normalized_score(report.mean_return(), summary.tag_mean.at("expert"), summary.tag_mean.at("random")),
       n, rc.seed});
  }
  if (model.bc) {
    const plan::NextObsPolicy bc(*model.bc, model.inverse_dynamics, model.stats);
    const auto bc_report = plan::rollout(env, bc, rc.eval_episodes, rc.seed, opts);
    rows.push_back({"mean_return_bc", "eval", bc_report.mean_return(), n, rc.seed});
    if (has_refs) {
      rows.push_back(
        {"normalized_score_bc", "eval",
         metrics::normalized_score(bc_report.mean_return(), summary.tag_mean.at("expert"), summary.tag_mean.at("random")),
         n, rc.seed});
    }
  }
  const auto step_plans = metrics::plans_at_step(report, rc.consistency_step);
  if (!step_plans.empty()) {
    rows.push_back(
      {"consistency_ratio_t" + std::to_string(rc.consistency_step), "eval",
       metrics::consistency_ratio(step_plans, rc.consistency_tol), static_cast<long long>(step_plans.size()),
       rc.seed});
  }
  metrics::write_metrics_csv(rc.out_dir / "metrics.csv", rows);
  json doc;
  for (const auto & r : rows) {
    doc[r.metric] = r.value;
  }
  write_json(rc.out_dir / "eval.json", {{"config", rc.resolved}, {"metrics", doc}});
  out << doc.dump() << '\n';
  return 0;
}

int cmd_bench(const RunConfig & rc, std::ostream & out)
{
  const auto rows = bench_sampling(rc.bench, rc.seed);
  fs::create_directories(rc.out_dir);
  std::ofstream csv(rc.out_dir / "bench_sampling.csv", std::ios::trunc);
  csv << "n_agents,mean_ms,std_ms,trials\n";
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  json per = json::array();
  for (const auto & r : rows) {
    csv << r.n_agents << ',' << r.mean_ms << ',' << r.std_ms << ',' << r.trials << '\n';
    lo = std::min(lo, r.mean_ms);
    hi = std::max(hi, r.mean_ms);
    per.push_back({{"n_agents", r.n_agents}, {"mean_ms", r.mean_ms}, {"std_ms", r.std_ms}});
  }
  const json summary = {{"rows", per}, {"max_over_min", rows.empty() ? 0.0 : hi / lo}};
  write_json(rc.out_dir / "bench_summary.json", summary);
  out << summary.dump() << '\n';
  return 0;
}

void emit_error(std::ostream & err, const std::string & kind, const std::string & message, const std::string & path)
{
  json e = {{"error", kind}, {"message", message}};
  if (!path.empty()) {
    e["path"] = path;
  }
  err << e.dump() << '\n';
}

}  // namespace

json default_config()
{
  const train::TrainConfig tc;
  json train = tc.to_json();
  train.erase("seed");
  train.erase("return_quantiles");
  return {
    {"seed", nullptr},
    {"out_dir", "madiff_out"},
    {"dataset_path", nullptr},
    {"checkpoint_path", nullptr},
    {"env", env::SpreadConfig{}.to_json()},
    {"data",
     {{"episodes", 300},
      {"mix", {{"expert", 1.0}, {"medium", 1.0}, {"random", 1.0}}},
      {"kp", 5.0},
      {"kd", 3.0},
      {"medium_noise", 0.5},
      {"greedy_assignment", false}}},
    {"net",
     {{"base_channels", 16},
      {"n_levels", 3},
      {"n_heads", 4},
      {"share_unet", true},
      {"use_attention", true},
      {"attention_residual", true},
      {"time_embed_dim", 32},
      {"return_embed_dim", 32},
      {"kernel_size", 5},
      {"norm_groups", 8}}},
    {"invdyn", {{"hidden", 256}, {"hidden_layers", 2}, {"shared", true}}},
    {"train", train},
    {"plan",
     {{"mode", "decentralized"},
      {"target_return", nullptr},
      {"target_percentile", 0.95},
      {"replan_every", 1},
      {"guidance_scale", 1.2},
      {"temperature_scale", 0.5},
      {"sampler_kind", "ddim"},
      {"ddim_steps", 15},
      {"clip_denoised", true}}},
    {"rollout", {{"episodes", 100}, {"log_plans", false}, {"batch", 100}}},
    {"eval", {{"episodes", 100}, {"consistency_step", 9}, {"consistency_tol", 0.1}}},
    {"predict",
     {{"dataset_path", nullptr},
      {"episodes", 50},
      {"samples", 20},
      {"min_k", 20},
      {"per_agent_min", false}}},
    {"bench",
     {{"agent_counts", {8, 16, 32}},
      {"trials", 100},
      {"obs_dim", 88},
      {"history", 20},
      {"horizon", 8},
      {"diffusion_steps", 200},
      {"ddim_steps", 15}}}};
}

json merge_config(const json & defaults, const json & user)
{
  return merge_at(defaults, user, "");
}

void apply_override(json & config, const std::string & assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like dotted.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) {
    value = raw;
  }
  json * node = &config;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) {
      throw ConfigError(path, "not an object path");
    }
    node = &(*node)[parts[i]];
    if (node->is_null()) {
      *node = json::object();
    }
  }
  if (!node->is_object()) {
    throw ConfigError(path, "not an object path");
  }
  (*node)[parts.back()] = value;
}

RunConfig parse_run_config(const json & j)
{
  RunConfig rc;
  rc.resolved = j;
  if (j.at("seed").is_null()) {
    throw ConfigError("seed", "a seed is required (config field or --seed)");
  }
  if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) {
    throw ConfigError("seed", "must be a non-negative integer");
  }
  rc.seed = j.at("seed").get<std::uint64_t>();
  rc.out_dir = j.at("out_dir").get<std::string>();
  rc.dataset_path = j.at("dataset_path").is_null() ? rc.out_dir / "dataset.mads"
                                                   : fs::path(j.at("dataset_path").get<std::string>());
  rc.checkpoint_path = j.at("checkpoint_path").is_null() ? rc.out_dir / "checkpoint.madc"
                                                         : fs::path(j.at("checkpoint_path").get<std::string>());

  rc.env = with_path("env", [&] { return env::SpreadConfig::from_json(j.at("env")); });

  const json & d = j.at("data");
  with_path("data", [&] {
    rc.data_episodes = d.at("episodes").get<int>();
    require_arg(rc.data_episodes >= 0, "data.episodes must be >= 0");
    rc.mix.expert = d.at("mix").at("expert").get<double>();
    rc.mix.medium = d.at("mix").at("medium").get<double>();
    rc.mix.random = d.at("mix").at("random").get<double>();
    rc.mix.counts(rc.data_episodes);
    rc.scripted.kp = d.at("kp").get<double>();
    rc.scripted.kd = d.at("kd").get<double>();
    rc.scripted.medium_noise = d.at("medium_noise").get<double>();
    rc.scripted.greedy_assignment = d.at("greedy_assignment").get<bool>();
    require_arg(rc.scripted.medium_noise >= 0.0, "data.medium_noise must be >= 0");
    return 0;
  });

  const json & n = j.at("net");
  rc.net.base_channels = n.at("base_channels").get<int>();
  rc.net.n_levels = n.at("n_levels").get<int>();
  rc.net.n_heads = n.at("n_heads").get<int>();
  rc.net.share_unet = n.at("share_unet").get<bool>();
  rc.net.use_attention = n.at("use_attention").get<bool>();
  rc.net.attention_residual = n.at("attention_residual").get<bool>();
  rc.net.time_embed_dim = n.at("time_embed_dim").get<int>();
  rc.net.return_embed_dim = n.at("return_embed_dim").get<int>();
  rc.net.kernel_size = n.at("kernel_size").get<int>();
  rc.net.norm_groups = n.at("norm_groups").get<int>();

  const json & id = j.at("invdyn");
  rc.invdyn.hidden = id.at("hidden").get<int>();
  rc.invdyn.hidden_layers = id.at("hidden_layers").get<int>();
  rc.invdyn.shared = id.at("shared").get<bool>();
  with_path("invdyn", [&] {
    require_arg(rc.invdyn.hidden >= 1, "invdyn.hidden must be positive");
    require_arg(rc.invdyn.hidden_layers >= 1, "invdyn.hidden_layers must be positive");
    return 0;
  });

  const json & p = j.at("plan");
  json plan_json = p;
  if (plan_json.at("target_return").is_null()) {
    plan_json.erase("target_return");
  }
  plan::PlanConfig pc = with_path("plan", [&] { return plan::PlanConfig::from_json(plan_json); });
  rc.train = with_path("train", [&] {
    auto tc = train::TrainConfig::from_json(j.at("train"));
    tc.seed = rc.seed;
    tc.num_workers = num_workers_from_env();
    require_arg(tc.diffusion_steps >= 1, "train.diffusion_steps must be >= 1");
    return tc;
  });
  with_path("plan", [&] {
    pc.history = rc.train.history;
    pc.horizon = rc.train.horizon;
    pc.validate(rc.train.diffusion_steps);
    return 0;
  });
  rc.train.sampler = pc.sampler;
  with_path("train", [&] {
    rc.train.validate();
    return 0;
  });
  with_path("net", [&] {
    net::NetConfig probe = rc.net;
    probe.obs_dim = 1;
    probe.n_agents = 1;
    probe.horizon_total = rc.train.history + rc.train.horizon;
    probe.validate();
    return 0;
  });

  rc.plan = pc;
  rc.target_return = opt_number(p, "target_return");
  rc.target_percentile = p.at("target_percentile").get<double>();
  if (rc.target_percentile < 0.0 || rc.target_percentile > 1.0) {
    throw ConfigError("plan.target_percentile", "must lie in [0, 1]");
  }

  const json & r = j.at("rollout");
  rc.rollout_episodes = r.at("episodes").get<int>();
  rc.rollout_log_plans = r.at("log_plans").get<bool>();
  rc.rollout_batch = r.at("batch").get<int>();
  if (rc.rollout_episodes < 0) {
    throw ConfigError("rollout.episodes", "must be >= 0");
  }
  if (rc.rollout_batch < 1) {
    throw ConfigError("rollout.batch", "must be >= 1");
  }

  const json & e = j.at("eval");
  rc.eval_episodes = e.at("episodes").get<int>();
  rc.consistency_step = e.at("consistency_step").get<int>();
  rc.consistency_tol = e.at("consistency_tol").get<double>();
  if (rc.eval_episodes < 0) {
    throw ConfigError("eval.episodes", "must be >= 0");
  }
  if (rc.consistency_tol < 0.0) {
    throw ConfigError("eval.consistency_tol", "must be >= 0");
  }

  const json & pr = j.at("predict");
  if (!pr.at("dataset_path").is_null()) {
    rc.predict_dataset = fs::path(pr.at("dataset_path").get<std::string>());
  }
  rc.predict_episodes = pr.at("episodes").get<int>();
  rc.predict_samples = pr.at("samples").get<int>();
  rc.predict_min_k = pr.at("min_k").get<int>();
  rc.predict_per_agent = pr.at("per_agent_min").get<bool>();
  if (rc.predict_episodes < 1) {
    throw ConfigError("predict.episodes", "must be >= 1");
  }
  if (rc.predict_samples < 1) {
    throw ConfigError("predict.samples", "must be >= 1");
  }
  if (rc.predict_min_k < 1) {
    throw ConfigError("predict.min_k", "must be >= 1");
  }

  const json & b = j.at("bench");
  rc.bench.agent_counts = b.at("agent_counts").get<std::vector<int>>();
  rc.bench.trials = b.at("trials").get<int>();
  rc.bench.obs_dim = b.at("obs_dim").get<int>();
  rc.bench.history = b.at("history").get<int>();
  rc.bench.horizon = b.at("horizon").get<int>();
  rc.bench.diffusion_steps = b.at("diffusion_steps").get<int>();
  rc.bench.ddim_steps = b.at("ddim_steps").get<int>();
  if (rc.bench.agent_counts.empty() ||
      std::any_of(rc.bench.agent_counts.begin(), rc.bench.agent_counts.end(), [](int v) { return v < 1; })) {
    throw ConfigError("bench.agent_counts", "needs at least one positive agent count");
  }
  if (rc.bench.trials < 1) {
    throw ConfigError("bench.trials", "must be >= 1");
  }
  if (rc.bench.ddim_steps < 1 || rc.bench.ddim_steps > rc.bench.diffusion_steps) {
    throw ConfigError("bench.ddim_steps", "must lie in [1, bench.diffusion_steps]");
  }
  return rc;
}

std::vector<BenchRow> bench_sampling(const BenchConfig & config, std::uint64_t seed)
{
  const auto sched = diffusion::build_schedule(config.diffusion_steps);
  diffusion::SamplerParams sampler;
  sampler.sampler_kind = diffusion::SamplerKind::ddim;
  sampler.ddim_steps = config.ddim_steps;
  std::vector<BenchRow> rows;
  for (int n_agents : config.agent_counts) {
    net::NetConfig nc;
    nc.obs_dim = config.obs_dim;
    nc.n_agents = n_agents;
    nc.horizon_total = config.history + config.horizon;
    nc.share_unet = true;
    const net::Denoiser model(nc, seed);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n_agents)));
    Condition cond = Condition::empty(n_agents, nc.horizon_total, nc.obs_dim);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int a = 0; a < n_agents; ++a) {
      for (int t = 0; t <= config.history; ++t) {
        cond.set_known(a, t, true);
        for (double & v : cond.known_values.row(a, t)) {
          v = u(rng);
        }
      }
    }
    cond.return_values = {0.9};
    plan::sample_plan(model, sched, sampler, cond, rng);  // warm-up
    std::vector<double> times;
    for (int i = 0; i < config.trials; ++i) {
      const auto start = std::chrono::steady_clock::now();
      plan::sample_plan(model, sched, sampler, cond, rng);
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    }
    BenchRow row;
    row.n_agents = n_agents;
    row.trials = config.trials;
    for (double t : times) {
      row.mean_ms += t;
    }
    row.mean_ms /= static_cast<double>(times.size());
    for (double t : times) {
      row.std_ms += (t - row.mean_ms) * (t - row.mean_ms);
    }
    row.std_ms = std::sqrt(row.std_ms / static_cast<double>(times.size()));
    rows.push_back(row);
  }
  return rows;
}

int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Multi-agent diffusion planning toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<long long> seed;
  std::string out_dir;
  std::string checkpoint;
  std::string mode;
  std::vector<std::string> overrides;
  const char * commands[][2] = {
    {"gen-data", "Generate a toy offline dataset"},
    {"train", "Train the diffusion model and inverse dynamics"},
    {"rollout", "Roll out the planner in the toy environment"},
    {"predict", "Trajectory prediction metrics"},
    {"eval", "Planner, baseline and consistency evaluation"},
    {"bench-sampling", "Time batched sampling across agent counts"}};
  for (const auto & c : commands) {
    CLI::App * sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "Seed (overrides the config)");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint file");
    sub->add_option("--mode", mode, "Execution mode")->check(CLI::IsMember({"centralized", "decentralized"}));
    sub->add_option("--set", overrides, "Override a config field: dotted.path=value");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError & e) {
    emit_error(err, "usage", e.what(), "");
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig rc;
  try {
    json user = json::object();
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        throw ConfigError("--config", "file not found: " + config_path);
      }
      std::ifstream in(config_path);
      user = json::parse(in, nullptr, false);
      if (user.is_discarded()) {
        throw ConfigError("--config", "not valid JSON: " + config_path);
      }
      user.erase("resolved_plan");
    }
    if (seed) {
      user["seed"] = *seed;
    }
    if (!out_dir.empty()) {
      user["out_dir"] = out_dir;
    }
    if (!checkpoint.empty()) {
      user["checkpoint_path"] = checkpoint;
    }
    if (!mode.empty()) {
      apply_override(user, "plan.mode=\"" + mode + "\"");
    }
    for (const auto & o : overrides) {
      apply_override(user, o);
    }
    const json resolved = merge_config(default_config(), user);
    rc = parse_run_config(resolved);
    if (command == "train" || command == "eval") {
      require_file(rc.dataset_path, "dataset_path");
    }
    if (command == "rollout" || command == "predict" || command == "eval") {
      require_file(rc.checkpoint_path, "checkpoint_path");
    }
    if (command == "predict" && rc.predict_dataset) {
      require_file(*rc.predict_dataset, "predict.dataset_path");
    }
  } catch (const ConfigError & e) {
    emit_error(err, "usage", e.what(), e.path());
    return 2;
  } catch (const std::exception & e) {
    emit_error(err, "usage", e.what(), "");
    return 2;
  }

  try {
    write_json(rc.out_dir / ("config_" + command + ".json"), rc.resolved);
    if (command == "gen-data") {
      return cmd_gen_data(rc, out);
    }
    if (command == "train") {
      return cmd_train(rc, out);
    }
    if (command == "rollout") {
      return cmd_rollout(rc, out);
    }
    if (command == "predict") {
      return cmd_predict(rc, out);
    }
    if (command == "eval") {
      return cmd_eval(rc, out);
    }
    return cmd_bench(rc, out);
  } catch (const std::exception & e) {
    emit_error(err, "runtime", e.what(), "");
    return 1;
  }
}

}  // namespace madiff::cli
