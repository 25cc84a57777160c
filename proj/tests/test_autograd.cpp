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


#include "madiff/autograd.hpp"
#include "madiff/common.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace madiff;
using namespace madiff::ag;

namespace
{

Matrix rand_mat(Index r, Index c, Rng & rng, double sd = 1.0)
{
  Matrix m(r, c);
  fill_normal({m.data(), static_cast<std::size_t>(m.size())}, rng, sd);
  return m;
}

/// Central-difference check of every entry of every parameter.
void check_all_grads(ParamStore & store, const std::function<Var(Tape &)> & fn, double tol = 1e-6)
{
  store.zero_grad();
  {
    Tape tape;
    tape.backward(fn(tape));
  }
  const double h = 1e-5;
  for (auto & [name, p] : store) {
    for (Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      Tape t1(false);
      const double up = fn(t1).value()(0, 0);
      p.value.data()[i] = keep - h;
      Tape t2(false);
      const double down = fn(t2).value()(0, 0);
      p.value.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad.size() == 0 ? 0.0 : p.grad.data()[i];
      INFO(name << "[" << i << "]");
      CHECK(std::abs(analytic - numeric) <= tol * (1.0 + std::abs(numeric)));
    }
  }
}

/// Scalar probe <W, y> so every output entry gets a distinct upstream gradient.
Var probe(Tape & tape, const Var & y, const Matrix & w)
{
  return sum_all(mul(y, tape.constant(w)));
}

}  // namespace

TEST_CASE("dense ops forward and backward")
{
  Rng rng(1);
  ParamStore s;
  s.add("a", rand_mat(3, 4, rng));
  s.add("b", rand_mat(4, 5, rng));
  s.add("c", rand_mat(3, 5, rng));
  s.add("bias", rand_mat(3, 1, rng));
  const Matrix w = rand_mat(3, 5, rng);

  Tape tape(false);
  const Var y = matmul(tape.param(s.at("a")), tape.param(s.at("b")));
  CHECK((y.value() - s.at("a").value * s.at("b").value).norm() < 1e-12);

  check_all_grads(s, [&](Tape & t) {
    Var y = matmul(t.param(s.at("a")), t.param(s.at("b")));
    y = add(y, t.param(s.at("c")));
    y = mul(y, sub(t.param(s.at("c")), scale(y, 0.3)));
    y = add_bias(y, t.param(s.at("bias")));
    return probe(t, mish(y), w);
  });
}

TEST_CASE("mish matches x tanh(softplus(x))")
{
  Rng rng(2);
  const Matrix x = rand_mat(5, 7, rng, 4.0);
  Tape tape(false);
  const Var y = mish(tape.constant(x));
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    CHECK(y.value().data()[i] == doctest::Approx(v * std::tanh(std::log1p(std::exp(v)))).epsilon(1e-12));
  }
}

TEST_CASE("column plumbing ops")
{
  Rng rng(3);
  ParamStore s;
  s.add("x", rand_mat(2, 6, rng));
  s.add("z", rand_mat(3, 6, rng));
  s.add("f", rand_mat(2, 1, rng));
  const std::vector<bool> use = {false, true, false, false, true, false};
  Tape tape(false);
  const Var sel = select_cols(tape.param(s.at("x")), tape.param(s.at("f")), use);
  for (Index j = 0; j < 6; ++j) {
    const Matrix want = use[j] ? s.at("f").value.col(0) : s.at("x").value.col(j);
    CHECK((sel.value().col(j) - want).norm() == 0.0);
  }
  const Var tiled = tile_cols(tape.param(s.at("f")), 3);
  CHECK(tiled.cols() == 3);

  const Matrix w = rand_mat(5, 8, rng);
  check_all_grads(s, [&](Tape & t) {
    const Var x = select_cols(t.param(s.at("x")), t.param(s.at("f")), use);
    const Var cat = concat_rows(x, t.param(s.at("z")));
    const Var left = slice_cols(cat, 1, 4);
    const Var parts[] = {left, tile_cols(slice_cols(cat, 0, 1), 4)};
    return probe(t, concat_cols(parts), w);
  });
}

TEST_CASE("conv1d matches a direct loop and has correct gradients")
{
  Rng rng(4);
  const int cin = 3;
  const int cout = 2;
  const int kernel = 3;
  const SeqLayout layout{2, 8};
  ParamStore s;
  s.add("x", rand_mat(cin, layout.cols(), rng));
  s.add("w", rand_mat(cout, kernel * cin, rng));
  s.add("b", rand_mat(cout, 1, rng));
  for (int stride : {1, 2}) {
    const int pad = 1;
    const Index len_out = (layout.length + 2 * pad - kernel) / stride + 1;
    Tape tape(false);
    const Var y =
      conv1d(tape.param(s.at("x")), tape.param(s.at("w")), tape.param(s.at("b")), layout, kernel, stride, pad);
    REQUIRE(y.cols() == layout.n_seq * len_out);
    for (Index seq = 0; seq < layout.n_seq; ++seq) {
      for (Index t = 0; t < len_out; ++t) {
        for (int co = 0; co < cout; ++co) {
          double ref = s.at("b").value(co, 0);
          for (int tap = 0; tap < kernel; ++tap) {
            const Index pos = t * stride + tap - pad;
            if (pos < 0 || pos >= layout.length) {
              continue;
            }
            for (int ci = 0; ci < cin; ++ci) {
              ref += s.at("w").value(co, tap * cin + ci) * s.at("x").value(ci, seq * layout.length + pos);
            }
          }
          CHECK(y.value()(co, seq * len_out + t) == doctest::Approx(ref).epsilon(1e-12));
        }
      }
    }
    const Matrix w = rand_mat(cout, layout.n_seq * len_out, rng);
    check_all_grads(s, [&](Tape & t) {
      return probe(
        t, conv1d(t.param(s.at("x")), t.param(s.at("w")), t.param(s.at("b")), layout, kernel, stride, pad), w);
    });
  }
}

TEST_CASE("upsample and per-sequence add")
{
  Rng rng(5);
  const SeqLayout layout{3, 4};
  ParamStore s;
  s.add("x", rand_mat(2, layout.cols(), rng));
  s.add("e", rand_mat(2, layout.n_seq, rng));
  Tape tape(false);
  const Var up = upsample_nearest(tape.param(s.at("x")), layout, 2);
  for (Index c = 0; c < up.cols(); ++c) {
    CHECK((up.value().col(c) - s.at("x").value.col(c / 2)).norm() == 0.0);
  }
  const Var added = add_per_sequence(tape.param(s.at("x")), tape.param(s.at("e")), layout);
  for (Index c = 0; c < layout.cols(); ++c) {
    const Matrix want = s.at("x").value.col(c) + s.at("e").value.col(c / layout.length);
    CHECK((added.value().col(c) - want).norm() < 1e-15);
  }
  const Matrix w = rand_mat(2, layout.cols() * 2, rng);
  check_all_grads(s, [&](Tape & t) {
    const Var x = add_per_sequence(t.param(s.at("x")), t.param(s.at("e")), layout);
    return probe(t, upsample_nearest(x, layout, 2), w);
  });
}

TEST_CASE("group norm matches per-group statistics")
{
  Rng rng(6);
  const SeqLayout layout{2, 5};
  const int ch = 4;
  const int groups = 2;
  ParamStore s;
  s.add("x", rand_mat(ch, layout.cols(), rng, 2.0));
  s.add("g", rand_mat(ch, 1, rng));
  s.add("b", rand_mat(ch, 1, rng));
  Tape tape(false);
  const Var y = group_norm(tape.param(s.at("x")), tape.param(s.at("g")), tape.param(s.at("b")), groups, layout);
  const Matrix & x = s.at("x").value;
  for (Index seq = 0; seq < layout.n_seq; ++seq) {
    for (int g = 0; g < groups; ++g) {
      double mean = 0.0;
      double sq = 0.0;
      int n = 0;
      for (int c = g * 2; c < g * 2 + 2; ++c) {
        for (Index t = 0; t < layout.length; ++t) {
          mean += x(c, seq * layout.length + t);
          ++n;
        }
      }
      mean /= n;
      for (int c = g * 2; c < g * 2 + 2; ++c) {
        for (Index t = 0; t < layout.length; ++t) {
          const double d = x(c, seq * layout.length + t) - mean;
          sq += d * d;
        }
      }
      const double sd = std::sqrt(sq / n + 1e-5);
      for (int c = g * 2; c < g * 2 + 2; ++c) {
        for (Index t = 0; t < layout.length; ++t) {
          const Index col = seq * layout.length + t;
          const double ref = (x(c, col) - mean) / sd * s.at("g").value(c, 0) + s.at("b").value(c, 0);
          CHECK(y.value()(c, col) == doctest::Approx(ref).epsilon(1e-12));
        }
      }
    }
  }
  const Matrix w = rand_mat(ch, layout.cols(), rng);
  check_all_grads(s, [&](Tape & t) {
    return probe(
      t, group_norm(t.param(s.at("x")), t.param(s.at("g")), t.param(s.at("b")), groups, layout), w);
  });
}

TEST_CASE("agent attention matches a loop oracle")
{
  Rng rng(7);
  const Index n = 3;
  const Index pos = 4;
  const int heads = 2;
  const Index width = 6;
  ParamStore s;
  s.add("q", rand_mat(width, n * pos, rng));
  s.add("k", rand_mat(width, n * pos, rng));
  s.add("v", rand_mat(width, n * pos, rng));
  Tape tape(false);
  Matrix weights;
  const Var y = agent_attention(
    tape.param(s.at("q")), tape.param(s.at("k")), tape.param(s.at("v")), n, heads, &weights);
  const Index hd = width / heads;
  for (int h = 0; h < heads; ++h) {
    for (Index r = 0; r < pos; ++r) {
      for (Index i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        double mx = -1e300;
        for (Index j = 0; j < n; ++j) {
          double dot = 0.0;
          for (Index d = 0; d < hd; ++d) {
            dot += s.at("q").value(h * hd + d, i * pos + r) * s.at("k").value(h * hd + d, j * pos + r);
          }
          logits[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double & l : logits) {
          l = std::exp(l - mx);
          z += l;
        }
        for (Index d = 0; d < hd; ++d) {
          double ref = 0.0;
          for (Index j = 0; j < n; ++j) {
            ref += logits[j] / z * s.at("v").value(h * hd + d, j * pos + r);
          }
          CHECK(y.value()(h * hd + d, i * pos + r) == doctest::Approx(ref).epsilon(1e-12));
        }
        for (Index j = 0; j < n; ++j) {
          CHECK(weights(i * n + j, h * pos + r) == doctest::Approx(logits[j] / z).epsilon(1e-12));
        }
      }
    }
  }
  const Matrix w = rand_mat(width, n * pos, rng);
  check_all_grads(s, [&](Tape & t) {
    return probe(t, agent_attention(t.param(s.at("q")), t.param(s.at("k")), t.param(s.at("v")), n, heads), w);
  });
}

TEST_CASE("loss ops")
{
  Rng rng(8);
  ParamStore s;
  s.add("p", rand_mat(3, 5, rng));
  const Matrix target = rand_mat(3, 5, rng);
  Matrix mask = Matrix::Ones(3, 5);
  mask(0, 1) = 0.0;
  mask(2, 4) = 0.0;
  const std::vector<int> labels = {0, 2, 1, 1, 0};

  Tape tape(false);
  const Matrix & p = s.at("p").value;
  double mse = 0.0;
  double norm = 0.0;
  double ce = 0.0;
  for (Index c = 0; c < 5; ++c) {
    double z = 0.0;
    for (Index r = 0; r < 3; ++r) {
      const double d = p(r, c) - target(r, c);
      mse += mask(r, c) * d * d;
      norm += d * d;
      z += std::exp(p(r, c));
    }
    ce += std::log(z) - p(labels[c], c);
  }
  CHECK(masked_mse(tape.param(s.at("p")), target, mask).value()(0, 0) == doctest::Approx(mse / 13.0));
  CHECK(mean_sq_norm(tape.param(s.at("p")), target).value()(0, 0) == doctest::Approx(norm / 5.0));
  CHECK(softmax_cross_entropy(tape.param(s.at("p")), labels).value()(0, 0) == doctest::Approx(ce / 5.0));
  CHECK(masked_mse(tape.param(s.at("p")), target, Matrix::Zero(3, 5)).value()(0, 0) == 0.0);

  check_all_grads(s, [&](Tape & t) { return masked_mse(t.param(s.at("p")), target, mask); });
  check_all_grads(s, [&](Tape & t) { return mean_sq_norm(t.param(s.at("p")), target); });
  check_all_grads(s, [&](Tape & t) { return softmax_cross_entropy(t.param(s.at("p")), labels); });
}

TEST_CASE("gradients accumulate across uses and respect disabled tapes")
{
  ParamStore s;
  s.add("x", Matrix::Constant(1, 1, 2.0));
  {
    Tape tape;
    const Var x = tape.param(s.at("x"));
    tape.backward(sum_all(add(mul(x, x), scale(x, 3.0))));
  }
  CHECK(s.at("x").grad(0, 0) == doctest::Approx(7.0));
  s.zero_grad();
  CHECK(s.at("x").grad(0, 0) == 0.0);
  Tape off(false);
  const Var y = mul(off.param(s.at("x")), off.param(s.at("x")));
  CHECK_FALSE(y.requires_grad());
  CHECK(s.scalar_count() == 1);
  CHECK_THROWS(s.at("missing"));
}

TEST_CASE("shape errors are reported")
{
  Tape tape(false);
  const Var a = tape.constant(Matrix::Zero(2, 3));
  const Var b = tape.constant(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(add(a, tape.constant(Matrix::Zero(3, 2))), std::invalid_argument);
  CHECK_THROWS_AS(group_norm(a, a, a, 4, SeqLayout{1, 3}), std::invalid_argument);
}
