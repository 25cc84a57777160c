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

#include "madiff/predictor_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace madiff::metrics
{

namespace
{

void check_pair(const JointTrajectory & pred, const JointTrajectory & truth, int pos_dims)
{
  require_arg(pred.same_shape(truth), "metrics: prediction and truth shapes differ");
  require_arg(truth.horizon() >= 1 && truth.n_agents() >= 1, "metrics: empty trajectory");
  require_arg(pos_dims >= 1 && pos_dims <= truth.obs_dim(), "metrics: position width out of range");
}

double displacement(const JointTrajectory & a, const JointTrajectory & b, int agent, int t, int pos_dims)
{
  double s = 0.0;
  for (int k = 0; k < pos_dims; ++k) {
    const double d = a(agent, t, k) - b(agent, t, k);
    s += d * d;
  }
  return std::sqrt(s);
}

double agent_ade(const JointTrajectory & pred, const JointTrajectory & truth, int agent, int pos_dims)
{
  double s = 0.0;
  for (int t = 0; t < truth.horizon(); ++t) {
    s += displacement(pred, truth, agent, t, pos_dims);
  }
  return s / truth.horizon();
}

double agent_fde(const JointTrajectory & pred, const JointTrajectory & truth, int agent, int pos_dims)
{
  return displacement(pred, truth, agent, truth.horizon() - 1, pos_dims);
}

double min_metric(
  std::span<const JointTrajectory> preds, const JointTrajectory & truth, int k, bool per_agent, int pos_dims,
  double (*agent_metric)(const JointTrajectory &, const JointTrajectory &, int, int))
{
  require_arg(k >= 1, "min metric: k must be >= 1");
  require_arg(static_cast<int>(preds.size()) >= k, "min metric: fewer samples than k");
  for (int s = 0; s < k; ++s) {
    check_pair(preds[s], truth, pos_dims);
  }
  const int n = truth.n_agents();
  if (per_agent) {
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      double best = std::numeric_limits<double>::infinity();
      for (int s = 0; s < k; ++s) {
        best = std::min(best, agent_metric(preds[s], truth, a, pos_dims));
      }
      total += best;
    }
    return total / n;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < k; ++s) {
    double joint = 0.0;
    for (int a = 0; a < n; ++a) {
      joint += agent_metric(preds[s], truth, a, pos_dims);
    }
    best = std::min(best, joint / n);
  }
  return best;
}

}  // namespace

std::vector<JointTrajectory> predict(
  const net::NoiseModel & model, const diffusion::DiffusionSchedule & sched,
  const diffusion::SamplerParams & sampler, const data::NormStats & stats, const PredictionRequest & req,
  Rng & rng)
{
  const int n = req.history.n_agents();
  const int C = req.history.horizon();
  const int d = req.history.obs_dim();
  require_arg(C >= 1, "predict: history must hold at least one step");
  require_arg(req.horizon >= 1, "predict: horizon must be >= 1");
  require_arg(req.samples >= 1, "predict: samples must be >= 1");
  const int len = C + req.horizon;

  Condition cond = Condition::empty(n, len, d);
  const JointTrajectory norm_hist = data::normalize_obs(req.history, stats);
  for (int a = 0; a < n; ++a) {
    for (int t = 0; t < C; ++t) {
      cond.set_known(a, t, true);
      const auto src = norm_hist.row(a, t);
      std::copy(src.begin(), src.end(), cond.known_values.row(a, t).begin());
    }
  }
  cond.return_values = {0.0};
  cond.is_null = true;

  std::vector<Condition> conds(static_cast<std::size_t>(req.samples), cond);
  std::vector<Rng> rngs;
  for (int s = 0; s < req.samples; ++s) {
    rngs.emplace_back(rng());
  }
  const auto plans = plan::sample_plans(model, sched, sampler, conds, rngs);

  std::vector<JointTrajectory> out;
  for (const auto & p : plans) {
    JointTrajectory future(n, req.horizon, d);
    for (int a = 0; a < n; ++a) {
      for (int t = 0; t < req.horizon; ++t) {
        const auto row = data::denormalize_obs(p.row(a, C + t), stats, a);
        std::copy(row.begin(), row.end(), future.row(a, t).begin());
      }
    }
    out.push_back(std::move(future));
  }
  return out;
}

double ade(const JointTrajectory & pred, const JointTrajectory & truth, int pos_dims)
{
  check_pair(pred, truth, pos_dims);
  double s = 0.0;
  for (int a = 0; a < truth.n_agents(); ++a) {
    s += agent_ade(pred, truth, a, pos_dims);
  }
  return s / truth.n_agents();
}

double fde(const JointTrajectory & pred, const JointTrajectory & truth, int pos_dims)
{
  check_pair(pred, truth, pos_dims);
  double s = 0.0;
  for (int a = 0; a < truth.n_agents(); ++a) {
    s += agent_fde(pred, truth, a, pos_dims);
  }
  return s / truth.n_agents();
}

double min_ade(
  std::span<const JointTrajectory> preds, const JointTrajectory & truth, int k, bool per_agent, int pos_dims)
{
  return min_metric(preds, truth, k, per_agent, pos_dims, &agent_ade);
}

double min_fde(
  std::span<const JointTrajectory> preds, const JointTrajectory & truth, int k, bool per_agent, int pos_dims)
{
  return min_metric(preds, truth, k, per_agent, pos_dims, &agent_fde);
}

double normalized_score(double score, double expert, double random)
{
  require_arg(expert != random, "normalized_score: expert and random scores must differ");
  return 100.0 * (score - random) / (expert - random);
}

double consistency_ratio(std::span<const std::vector<JointTrajectory>> episode_plans, double tol, int pos_dims)
{
  require_arg(!episode_plans.empty(), "consistency_ratio: no logged plans");
  require_arg(tol >= 0.0, "consistency_ratio: tolerance must be >= 0");
  int consistent = 0;
  for (const auto & plans : episode_plans) {
    const int n = static_cast<int>(plans.size());
    require_arg(n >= 1, "consistency_ratio: episode without plans");
    for (const auto & p : plans) {
      require_arg(p.n_agents() == n, "consistency_ratio: expected one plan per agent viewpoint");
      require_arg(pos_dims <= p.obs_dim(), "consistency_ratio: position width out of range");
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = 0; j < n && ok; ++j) {
        if (i == j) {
          continue;
        }
        const int last_i = plans[i].horizon() - 1;
        const int last_j = plans[j].horizon() - 1;
        double s = 0.0;
        for (int k = 0; k < pos_dims; ++k) {
          const double diff = plans[i](j, last_i, k) - plans[j](j, last_j, k);
          s += diff * diff;
        }
        ok = std::sqrt(s) <= tol;
      }
    }
    consistent += ok ? 1 : 0;
  }
  return static_cast<double>(consistent) / static_cast<double>(episode_plans.size());
}

std::vector<std::vector<JointTrajectory>> plans_at_step(const plan::RolloutReport & report, int t)
{
  std::vector<std::vector<JointTrajectory>> out;
  for (const auto & e : report.episodes) {
    const auto it = e.plans.find(t);
    if (it != e.plans.end()) {
      out.push_back(it->second);
    }
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path & path, std::span<const MetricRow> rows)
{
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << "metric,split,value,n,seed\n";
  char buf[64];
  for (const auto & r : rows) {
    std::snprintf(buf, sizeof(buf), "%.10g", r.value);
    out << r.metric << ',' << r.split << ',' << buf << ',' << r.n << ',' << r.seed << '\n';
  }
}

void write_trajectory_svg(
  const std::filesystem::path & path, const JointTrajectory & truth, std::span<const JointTrajectory> preds)
{
  require_arg(truth.obs_dim() >= 2, "trajectory svg: needs 2-D positions");
  for (const auto & p : preds) {
    require_arg(p.n_agents() == truth.n_agents() && p.obs_dim() == truth.obs_dim(), "trajectory svg: shape mismatch");
  }
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  auto extend = [&](const JointTrajectory & tr) {
    for (int a = 0; a < tr.n_agents(); ++a) {
      for (int t = 0; t < tr.horizon(); ++t) {
        for (int k = 0; k < 2; ++k) {
          lo[k] = std::min(lo[k], tr(a, t, k));
          hi[k] = std::max(hi[k], tr(a, t, k));
        }
      }
    }
  };
  extend(truth);
  for (const auto & p : preds) {
    extend(p);
  }
  const double size = 480.0;
  const double margin = 10.0;
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-9});
  auto px = [&](double v, int k) {
    const double u = (v - lo[k]) / span * (size - 2 * margin) + margin;
    return k == 0 ? u : size - u;
  };
  static const char * colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  auto polyline = [&](const JointTrajectory & tr, int a, bool dashed) {
    svg << "<polyline fill=\"none\" stroke=\"" << colors[a % 6] << "\" stroke-width=\"2\"";
    if (dashed) {
      svg << " stroke-dasharray=\"6,4\"";
    }
    svg << " points=\"";
    for (int t = 0; t < tr.horizon(); ++t) {
      svg << px(tr(a, t, 0), 0) << ',' << px(tr(a, t, 1), 1) << ' ';
    }
    svg << "\"/>\n";
  };
  for (int a = 0; a < truth.n_agents(); ++a) {
    polyline(truth, a, false);
    for (const auto & p : preds) {
      polyline(p, a, true);
    }
  }
  svg << "</svg>\n";
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string());
  }
  out << svg.str();
}

}  // namespace madiff::metrics
