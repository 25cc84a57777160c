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


#include "madiff/diffusion_schedule.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace madiff;
using namespace madiff::diffusion;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace
{

JointTrajectory random_traj(int n, int h, int d, Rng & rng)
{
  JointTrajectory t(n, h, d);
  fill_normal(t.values(), rng);
  return t;
}

Big cosine_ref(int t, int K)
{
  const Big pi = boost::math::constants::pi<Big>();
  const Big x = (Big(t) / K + Big("0.008")) / Big("1.008") * pi / 2;
  const Big c = cos(x);
  return c * c;
}

}  // namespace

TEST_CASE("cosine schedule matches a 50-digit reference")
{
  for (int K : {1, 10, 200}) {
    const auto s = build_schedule(K);
    REQUIRE(s.steps == K);
    Big bar = 1;
    for (int k = 1; k <= K; ++k) {
      Big a = cosine_ref(k, K) / cosine_ref(k - 1, K);
      if (a < Big("0.001")) {
        a = Big("0.001");
      }
      bar *= a;
      CHECK(s.alpha_at(k) == doctest::Approx(a.convert_to<double>()).epsilon(1e-13));
      CHECK(s.alpha_bar_at(k) == doctest::Approx(bar.convert_to<double>()).epsilon(1e-11));
      CHECK(s.sigma_at(k) == doctest::Approx(std::sqrt(1.0 - s.alpha_at(k))).epsilon(1e-14));
    }
    CHECK(s.alpha_bar_at(0) == 1.0);
  }
}

TEST_CASE("schedules are monotone and bounded")
{
  for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear}) {
    for (int K : {2, 20, 200, 1000}) {
      const auto s = build_schedule(K, kind);
      for (int k = 1; k <= K; ++k) {
        CHECK(s.alpha_at(k) > 0.0);
        CHECK(s.alpha_at(k) < 1.0);
        CHECK(s.alpha_bar_at(k) < s.alpha_bar_at(k - 1));
      }
      CHECK(s.alpha_bar_at(K) < 0.05);
    }
  }
  CHECK_THROWS_AS(build_schedule(0), std::invalid_argument);
  CHECK(parse_schedule_kind(to_string(ScheduleKind::linear)) == ScheduleKind::linear);
  CHECK_THROWS_AS(parse_schedule_kind("quadratic"), std::invalid_argument);
}

TEST_CASE("posterior mean matches a high-precision evaluation")
{
  const auto s = build_schedule(50);
  Rng rng(3);
  const auto xk = random_traj(2, 4, 3, rng);
  const auto eps = random_traj(2, 4, 3, rng);
  for (int k : {1, 7, 50}) {
    const auto mu = posterior_mean(xk, k, eps, s);
    const Big a = s.alpha_at(k);
    const Big ab = s.alpha_bar_at(k);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Big ref = (Big(xk.values()[i]) - (1 - a) / sqrt(1 - ab) * Big(eps.values()[i])) / sqrt(a);
      CHECK(mu.values()[i] == doctest::Approx(ref.convert_to<double>()).epsilon(1e-12));
    }
  }
}

TEST_CASE("posterior mean inverts forward noise for the true noise at k = 1")
{
  const auto s = build_schedule(30);
  Rng rng(5);
  const auto x0 = random_traj(3, 4, 2, rng);
  const auto eps = random_traj(3, 4, 2, rng);
  const auto x1 = forward_noise(x0, 1, eps, s);
  const auto back = posterior_mean(x1, 1, eps, s);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(back.values()[i] == doctest::Approx(x0.values()[i]).epsilon(1e-9));
  }
}

TEST_CASE("closed-form noising agrees with the iterated one-step chain")
{
  const auto s = build_schedule(200);
  Rng rng(11);
  std::uniform_int_distribution<int> pick(1, 200);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = pick(rng);
    const auto x0 = random_traj(2, 3, 2, rng);
    JointTrajectory x = x0;
    JointTrajectory acc(2, 3, 2);
    double var = 0.0;
    for (int j = 1; j <= k; ++j) {
      const auto e = random_traj(2, 3, 2, rng);
      const double sa = std::sqrt(s.alpha_at(j));
      const double sb = std::sqrt(1.0 - s.alpha_at(j));
      for (std::size_t i = 0; i < x.size(); ++i) {
        x.values()[i] = sa * x.values()[i] + sb * e.values()[i];
        acc.values()[i] = sa * acc.values()[i] + sb * e.values()[i];
      }
      var = s.alpha_at(j) * var + (1.0 - s.alpha_at(j));
    }
    CHECK(var == doctest::Approx(1.0 - s.alpha_bar_at(k)).epsilon(1e-10));
    JointTrajectory eps = acc;
    for (double & v : eps.values()) {
      v /= std::sqrt(1.0 - s.alpha_bar_at(k));
    }
    const auto closed = forward_noise(x0, k, eps, s);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(closed.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("guided epsilon identities")
{
  Rng rng(2);
  const auto c = random_traj(2, 3, 4, rng);
  const auto u = random_traj(2, 3, 4, rng);
  CHECK(guided_epsilon(c, u, 0.0) == u);
  CHECK(guided_epsilon(c, u, 1.0) == c);
  const auto g = guided_epsilon(c, u, 1.2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g.values()[i] == doctest::Approx(u.values()[i] + 1.2 * (c.values()[i] - u.values()[i])));
  }
  CHECK_THROWS_AS(guided_epsilon(c, JointTrajectory(1, 3, 4), 1.0), std::invalid_argument);
}

TEST_CASE("sample_initial and denoise_step scale noise by the temperature")
{
  Rng rng(8);
  const auto x = sample_initial(4, 50, 10, 0.5, rng);
  double m = 0.0;
  double v = 0.0;
  for (double e : x.values()) {
    m += e;
    v += e * e;
  }
  m /= x.size();
  v = v / x.size() - m * m;
  CHECK(std::abs(m) < 0.05);
  CHECK(std::sqrt(v) == doctest::Approx(0.5).epsilon(0.05));
  CHECK_THROWS_AS(sample_initial(1, 1, 1, 1.0, rng), std::invalid_argument);

  const auto s = build_schedule(20);
  const auto eps = random_traj(4, 50, 10, rng);
  const auto mu = posterior_mean(x, 10, eps, s);
  CHECK(denoise_step(x, 10, eps, s, 0.0, rng) == mu);
  CHECK(denoise_step(x, 1, eps, s, 0.9, rng) == posterior_mean(x, 1, eps, s));
  const auto y = denoise_step(x, 10, eps, s, 0.5, rng);
  double r2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    r2 += (y.values()[i] - mu.values()[i]) * (y.values()[i] - mu.values()[i]);
  }
  CHECK(std::sqrt(r2 / y.size()) == doctest::Approx(0.5 * s.sigma_at(10)).epsilon(0.05));
}

TEST_CASE("ddim step reproduces x0 when given the true noise")
{
  const auto s = build_schedule(100);
  Rng rng(4);
  const auto x0 = random_traj(2, 8, 3, rng);
  const auto eps = random_traj(2, 8, 3, rng);
  const auto xk = forward_noise(x0, 60, eps, s);
  const auto mid = ddim_step(xk, 60, 20, eps, s);
  const auto ref = forward_noise(x0, 20, eps, s);
  const auto end = ddim_step(xk, 60, 0, eps, s);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(mid.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-9));
    CHECK(end.values()[i] == doctest::Approx(x0.values()[i]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(ddim_step(xk, 5, 5, eps, s), std::invalid_argument);
}

TEST_CASE("ddim timesteps are strictly decreasing from K to 1")
{
  for (int K : {1, 15, 200}) {
    for (int n = 1; n <= std::min(K, 40); ++n) {
      const auto ts = ddim_timesteps(K, n);
      REQUIRE(static_cast<int>(ts.size()) == n);
      CHECK(ts.front() == K);
      if (n > 1) {
        CHECK(ts.back() == 1);
      }
      for (int i = 1; i < n; ++i) {
        CHECK(ts[i] < ts[i - 1]);
      }
    }
  }
  CHECK_THROWS_AS(ddim_timesteps(10, 11), std::invalid_argument);
}

TEST_CASE("sampler params validation")
{
  SamplerParams p;
  CHECK_NOTHROW(p.validate(200));
  p.temperature_scale = 1.0;
  CHECK_THROWS_AS(p.validate(200), std::invalid_argument);
  p = SamplerParams{};
  p.ddim_steps = 201;
  CHECK_THROWS_AS(p.validate(200), std::invalid_argument);
  p = SamplerParams{};
  p.guidance_scale = -0.1;
  CHECK_THROWS_AS(p.validate(200), std::invalid_argument);
}

TEST_CASE("clipped noise reproduces the posterior around a clipped clean estimate")
{
  const auto sched = build_schedule(200);
  Rng rng(21);
  for (int k : {1, 2, 50, 150, 199, 200}) {
    JointTrajectory x(2, 3, 4);
    JointTrajectory eps(2, 3, 4);
    fill_normal(x.values(), rng, 1.5);
    fill_normal(eps.values(), rng);
    const auto clipped = clip_epsilon(x, k, eps, sched);
    const double ab = sched.alpha_bar_at(k);
    const double ab_prev = sched.alpha_bar_at(k - 1);
    const double alpha = ab / ab_prev;
    const auto mean = posterior_mean(x, k, clipped, sched);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = (x.values()[i] - std::sqrt(1.0 - ab) * eps.values()[i]) / std::sqrt(ab);
      const double c0 = std::clamp(x0, -1.0, 1.0);
      if (c0 == x0) {
        CHECK(clipped.values()[i] == eps.values()[i]);
      }
      const double want = std::sqrt(ab_prev) * (1.0 - alpha) / (1.0 - ab) * c0 +
                          std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab) * x.values()[i];
      CHECK(mean.values()[i] == doctest::Approx(want).epsilon(1e-9).scale(1.0));
    }
    const auto jump = ddim_step(x, k, 0, clipped, sched);
    for (double v : jump.values()) {
      CHECK(std::abs(v) <= 1.0 + 1e-9);
    }
  }
}
