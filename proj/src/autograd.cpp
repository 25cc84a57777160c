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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace madiff::ag
{

namespace
{

void require(bool ok, const char * what)
{
  if (!ok) {
    throw std::invalid_argument(what);
  }
}

bool any_grad(std::initializer_list<const Var *> vars)
{
  for (const Var * v : vars) {
    if (v->requires_grad()) {
      return true;
    }
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value)
{
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.back().get()};
}

Var Tape::param(Parameter & p)
{
  auto node = std::make_unique<Node>();
  node->value = p.value;
  node->requires_grad = grad_enabled_;
  node->param = grad_enabled_ ? &p : nullptr;
  nodes_.push_back(std::move(node));
  return {this, nodes_.back().get()};
}

Var Tape::make(Matrix value, bool requires_grad, std::function<void(Node &)> backward)
{
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = grad_enabled_ && requires_grad;
  if (node->requires_grad) {
    node->backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.back().get()};
}

void Tape::backward(const Var & loss)
{
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be a 1x1 value");
  if (!loss.requires_grad()) {
    return;
  }
  loss.node()->grad = Matrix::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node & n = **it;
    if (!n.requires_grad || n.grad.size() == 0) {
      continue;
    }
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) {
        n.param->grad = n.grad;
      } else {
        n.param->grad += n.grad;
      }
    } else if (n.backward) {
      n.backward(n);
    }
  }
}

// ---------------------------------------------------------------------------
// Dense algebra

Var matmul(const Var & a, const Var & b)
{
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Node * na = a.node();
  Node * nb = b.node();
  return a.tape().make(a.value() * b.value(), any_grad({&a, &b}), [na, nb](Node & out) {
    if (na->requires_grad) {
      accumulate(na, out.grad * nb->value.transpose());
    }
    if (nb->requires_grad) {
      accumulate(nb, na->value.transpose() * out.grad);
    }
  });
}

Var add(const Var & a, const Var & b)
{
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Node * na = a.node();
  Node * nb = b.node();
  return a.tape().make(a.value() + b.value(), any_grad({&a, &b}), [na, nb](Node & out) {
    accumulate(na, out.grad);
    accumulate(nb, out.grad);
  });
}

Var sub(const Var & a, const Var & b)
{
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Node * na = a.node();
  Node * nb = b.node();
  return a.tape().make(a.value() - b.value(), any_grad({&a, &b}), [na, nb](Node & out) {
    accumulate(na, out.grad);
    accumulate(nb, -out.grad);
  });
}

Var mul(const Var & a, const Var & b)
{
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Node * na = a.node();
  Node * nb = b.node();
  Matrix y = a.value().cwiseProduct(b.value());
  return a.tape().make(std::move(y), any_grad({&a, &b}), [na, nb](Node & out) {
    if (na->requires_grad) {
      accumulate(na, out.grad.cwiseProduct(nb->value));
    }
    if (nb->requires_grad) {
      accumulate(nb, out.grad.cwiseProduct(na->value));
    }
  });
}

Var scale(const Var & a, double s)
{
  Node * na = a.node();
  return a.tape().make(a.value() * s, a.requires_grad(), [na, s](Node & out) {
    accumulate(na, out.grad * s);
  });
}

Var add_bias(const Var & x, const Var & bias)
{
  require(bias.cols() == 1 && bias.rows() == x.rows(), "add_bias: bias must be rows x 1");
  Node * nx = x.node();
  Node * nb = bias.node();
  Matrix y = x.value().colwise() + bias.value().col(0);
  return x.tape().make(std::move(y), any_grad({&x, &bias}), [nx, nb](Node & out) {
    accumulate(nx, out.grad);
    if (nb->requires_grad) {
      accumulate(nb, out.grad.rowwise().sum());
    }
  });
}

Var linear(const Var & x, const Var & weight, const Var & bias)
{
  return add_bias(matmul(weight, x), bias);
}

Var mish(const Var & x)
{
  // tanh(softplus(x)) = n (n + 2) / (n (n + 2) + 2) with n = exp(x).
  const auto v = x.value().array();
  const Eigen::ArrayXXd n = v.min(20.0).exp();
  const Eigen::ArrayXXd num = n * (n + 2.0);
  const Eigen::ArrayXXd th = num / (num + 2.0);
  Matrix y = (v * th).matrix();
  Node * nx = x.node();
  if (!(x.requires_grad() && x.tape().grad_enabled())) {
    return x.tape().make(std::move(y), false, nullptr);
  }
  Matrix d = (th + v * (1.0 - th.square()) * (n / (1.0 + n))).matrix();
  return x.tape().make(std::move(y), true, [nx, d = std::move(d)](Node & out) {
    accumulate(nx, out.grad.cwiseProduct(d));
  });
}

// ---------------------------------------------------------------------------
// Column / row plumbing

Var concat_rows(const Var & a, const Var & b)
{
  require(a.cols() == b.cols(), "concat_rows: column count mismatch");
  Matrix y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = a.value();
  y.bottomRows(b.rows()) = b.value();
  Node * na = a.node();
  Node * nb = b.node();
  const Index ra = a.rows();
  const Index rb = b.rows();
  return a.tape().make(std::move(y), any_grad({&a, &b}), [na, nb, ra, rb](Node & out) {
    if (na->requires_grad) {
      accumulate(na, out.grad.topRows(ra));
    }
    if (nb->requires_grad) {
      accumulate(nb, out.grad.bottomRows(rb));
    }
  });
}

Var slice_cols(const Var & x, Index start, Index count)
{
  require(start >= 0 && count >= 0 && start + count <= x.cols(), "slice_cols: out of range");
  Node * nx = x.node();
  const Index total = x.cols();
  Matrix y = x.value().middleCols(start, count);
  return x.tape().make(std::move(y), x.requires_grad(), [nx, start, count, total](Node & out) {
    Matrix g = Matrix::Zero(out.grad.rows(), total);
    g.middleCols(start, count) = out.grad;
    accumulate(nx, g);
  });
}

Var concat_cols(std::span<const Var> parts)
{
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index total = 0;
  bool grad = false;
  for (const Var & p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    total += p.cols();
    grad = grad || p.requires_grad();
  }
  Matrix y(rows, total);
  std::vector<std::pair<Node *, Index>> spans;
  Index offset = 0;
  for (const Var & p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    spans.emplace_back(p.node(), offset);
    offset += p.cols();
  }
  return parts.front().tape().make(std::move(y), grad, [spans](Node & out) {
    for (const auto & [node, off] : spans) {
      if (node->requires_grad) {
        accumulate(node, out.grad.middleCols(off, node->value.cols()));
      }
    }
  });
}

Var tile_cols(const Var & x, Index reps)
{
  require(reps >= 1, "tile_cols: reps must be positive");
  const Index c = x.cols();
  Matrix y(x.rows(), c * reps);
  for (Index r = 0; r < reps; ++r) {
    y.middleCols(r * c, c) = x.value();
  }
  Node * nx = x.node();
  return x.tape().make(std::move(y), x.requires_grad(), [nx, reps, c](Node & out) {
    Matrix g = out.grad.middleCols(0, c);
    for (Index r = 1; r < reps; ++r) {
      g += out.grad.middleCols(r * c, c);
    }
    accumulate(nx, g);
  });
}

Var select_cols(const Var & x, const Var & fallback, const std::vector<bool> & use_fallback)
{
  require(fallback.cols() == 1 && fallback.rows() == x.rows(), "select_cols: bad fallback shape");
  require(static_cast<Index>(use_fallback.size()) == x.cols(), "select_cols: mask size mismatch");
  Matrix y = x.value();
  for (Index j = 0; j < y.cols(); ++j) {
    if (use_fallback[j]) {
      y.col(j) = fallback.value().col(0);
    }
  }
  Node * nx = x.node();
  Node * nf = fallback.node();
  return x.tape().make(
    std::move(y), any_grad({&x, &fallback}), [nx, nf, use_fallback](Node & out) {
      if (nx->requires_grad) {
        Matrix g = out.grad;
        for (Index j = 0; j < g.cols(); ++j) {
          if (use_fallback[j]) {
            g.col(j).setZero();
          }
        }
        accumulate(nx, g);
      }
      if (nf->requires_grad) {
        Vector g = Vector::Zero(out.grad.rows());
        for (Index j = 0; j < out.grad.cols(); ++j) {
          if (use_fallback[j]) {
            g += out.grad.col(j);
          }
        }
        accumulate(nf, g);
      }
    });
}

// ---------------------------------------------------------------------------
// Sequence ops

Var conv1d(
  const Var & x, const Var & weight, const Var & bias, SeqLayout layout, int kernel, int stride,
  int pad)
{
  const Index cin = x.rows();
  require(layout.cols() == x.cols(), "conv1d: layout does not match input columns");
  require(weight.cols() == cin * kernel, "conv1d: weight must be Cout x (kernel * Cin)");
  require(bias.rows() == weight.rows() && bias.cols() == 1, "conv1d: bias must be Cout x 1");
  require(stride >= 1 && kernel >= 1 && pad >= 0, "conv1d: bad geometry");
  const Index len = layout.length;
  const Index len_out = (len + 2 * pad - kernel) / stride + 1;
  require(len_out >= 1, "conv1d: output length would be empty");
  const Index n_seq = layout.n_seq;

  Matrix cols = Matrix::Zero(cin * kernel, n_seq * len_out);
  const Matrix & xv = x.value();
  for (Index s = 0; s < n_seq; ++s) {
    for (Index t = 0; t < len_out; ++t) {
      const Index dst = s * len_out + t;
      for (int o = 0; o < kernel; ++o) {
        const Index pos = t * stride + o - pad;
        if (pos >= 0 && pos < len) {
          cols.block(o * cin, dst, cin, 1) = xv.col(s * len + pos);
        }
      }
    }
  }
  Matrix y = weight.value() * cols;
  y.colwise() += bias.value().col(0);

  const bool grad = any_grad({&x, &weight, &bias}) && x.tape().grad_enabled();
  Node * nx = x.node();
  Node * nw = weight.node();
  Node * nb = bias.node();
  if (!grad) {
    return x.tape().make(std::move(y), false, nullptr);
  }
  return x.tape().make(
    std::move(y), true,
    [nx, nw, nb, c = std::move(cols), cin, kernel, stride, pad, len, len_out, n_seq](Node & out) {
      if (nw->requires_grad) {
        accumulate(nw, out.grad * c.transpose());
      }
      if (nb->requires_grad) {
        accumulate(nb, out.grad.rowwise().sum());
      }
      if (nx->requires_grad) {
        const Matrix dcols = nw->value.transpose() * out.grad;
        Matrix dx = Matrix::Zero(cin, n_seq * len);
        for (Index s = 0; s < n_seq; ++s) {
          for (Index t = 0; t < len_out; ++t) {
            const Index src = s * len_out + t;
            for (int o = 0; o < kernel; ++o) {
              const Index pos = t * stride + o - pad;
              if (pos >= 0 && pos < len) {
                dx.col(s * len + pos) += dcols.block(o * cin, src, cin, 1);
              }
            }
          }
        }
        accumulate(nx, dx);
      }
    });
}

Var upsample_nearest(const Var & x, SeqLayout layout, int factor)
{
  require(layout.cols() == x.cols(), "upsample_nearest: layout mismatch");
  require(factor >= 1, "upsample_nearest: factor must be positive");
  const Index len = layout.length;
  Matrix y(x.rows(), x.cols() * factor);
  for (Index s = 0; s < layout.n_seq; ++s) {
    for (Index t = 0; t < len; ++t) {
      for (int u = 0; u < factor; ++u) {
        y.col((s * len + t) * factor + u) = x.value().col(s * len + t);
      }
    }
  }
  Node * nx = x.node();
  return x.tape().make(std::move(y), x.requires_grad(), [nx, factor](Node & out) {
    const Index n = out.grad.cols() / factor;
    Matrix g = Matrix::Zero(out.grad.rows(), n);
    for (Index j = 0; j < n; ++j) {
      for (int u = 0; u < factor; ++u) {
        g.col(j) += out.grad.col(j * factor + u);
      }
    }
    accumulate(nx, g);
  });
}

Var group_norm(
  const Var & x, const Var & gamma, const Var & beta, int groups, SeqLayout layout, double eps)
{
  const Index ch = x.rows();
  require(groups >= 1 && ch % groups == 0, "group_norm: groups must divide channels");
  require(layout.cols() == x.cols(), "group_norm: layout mismatch");
  require(gamma.rows() == ch && gamma.cols() == 1, "group_norm: gamma must be C x 1");
  require(beta.rows() == ch && beta.cols() == 1, "group_norm: beta must be C x 1");
  const Index cg = ch / groups;
  const Index len = layout.length;
  const Index n_seq = layout.n_seq;
  const double count = static_cast<double>(cg * len);

  Matrix xhat(ch, x.cols());
  Vector inv_std(n_seq * groups);
  const Matrix & xv = x.value();
  for (Index s = 0; s < n_seq; ++s) {
    for (Index g = 0; g < groups; ++g) {
      auto blk = xv.block(g * cg, s * len, cg, len);
      const double mean = blk.sum() / count;
      const double var = (blk.array() - mean).square().sum() / count;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std(s * groups + g) = is;
      xhat.block(g * cg, s * len, cg, len) = (blk.array() - mean) * is;
    }
  }
  Matrix y = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  y.colwise() += beta.value().col(0);

  Node * nx = x.node();
  Node * ng = gamma.node();
  Node * nb = beta.node();
  const bool grad = any_grad({&x, &gamma, &beta}) && x.tape().grad_enabled();
  if (!grad) {
    return x.tape().make(std::move(y), false, nullptr);
  }
  return x.tape().make(
    std::move(y), true,
    [nx, ng, nb, xh = std::move(xhat), is = std::move(inv_std), groups, cg, len, n_seq,
     count](Node & out) {
      if (ng->requires_grad) {
        accumulate(ng, out.grad.cwiseProduct(xh).rowwise().sum());
      }
      if (nb->requires_grad) {
        accumulate(nb, out.grad.rowwise().sum());
      }
      if (nx->requires_grad) {
        Matrix dxhat = (out.grad.array().colwise() * ng->value.col(0).array()).matrix();
        Matrix dx(dxhat.rows(), dxhat.cols());
        for (Index s = 0; s < n_seq; ++s) {
          for (Index g = 0; g < groups; ++g) {
            auto d = dxhat.block(g * cg, s * len, cg, len).array();
            auto h = xh.block(g * cg, s * len, cg, len).array();
            const double mean_d = d.sum() / count;
            const double mean_dh = (d * h).sum() / count;
            dx.block(g * cg, s * len, cg, len) =
              (is(s * groups + g) * (d - mean_d - h * mean_dh)).matrix();
          }
        }
        accumulate(nx, dx);
      }
    });
}

Var add_per_sequence(const Var & x, const Var & e, SeqLayout layout)
{
  require(layout.cols() == x.cols(), "add_per_sequence: layout mismatch");
  require(e.rows() == x.rows() && e.cols() == layout.n_seq, "add_per_sequence: bad embedding");
  const Index len = layout.length;
  Matrix y = x.value();
  for (Index s = 0; s < layout.n_seq; ++s) {
    y.middleCols(s * len, len).colwise() += e.value().col(s);
  }
  Node * nx = x.node();
  Node * ne = e.node();
  const Index n_seq = layout.n_seq;
  return x.tape().make(std::move(y), any_grad({&x, &e}), [nx, ne, len, n_seq](Node & out) {
    accumulate(nx, out.grad);
    if (ne->requires_grad) {
      Matrix g(out.grad.rows(), n_seq);
      for (Index s = 0; s < n_seq; ++s) {
        g.col(s) = out.grad.middleCols(s * len, len).rowwise().sum();
      }
      accumulate(ne, g);
    }
  });
}

Var agent_attention(
  const Var & q, const Var & k, const Var & v, Index n_agents, int n_heads, Matrix * weights_out)
{
  require(
    q.rows() == k.rows() && q.rows() == v.rows() && q.cols() == k.cols() && q.cols() == v.cols(),
    "agent_attention: q, k, v shapes differ");
  require(n_agents >= 1 && q.cols() % n_agents == 0, "agent_attention: columns not agent-major");
  require(n_heads >= 1 && q.rows() % n_heads == 0, "agent_attention: heads must divide width");
  const Index n = n_agents;
  const Index positions = q.cols() / n;
  const Index dh = q.rows() / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix & qv = q.value();
  const Matrix & kv = k.value();
  const Matrix & vv = v.value();
  Matrix y = Matrix::Zero(vv.rows(), vv.cols());
  Matrix w(n * n, n_heads * positions);
  std::vector<double> scores(static_cast<std::size_t>(n));

  for (Index r = 0; r < positions; ++r) {
    for (int h = 0; h < n_heads; ++h) {
      const Index row0 = h * dh;
      const Index wcol = h * positions + r;
      for (Index i = 0; i < n; ++i) {
        const auto qi = qv.col(i * positions + r).segment(row0, dh);
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j) {
          scores[j] = qi.dot(kv.col(j * positions + r).segment(row0, dh)) * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (Index j = 0; j < n; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        auto yi = y.col(i * positions + r).segment(row0, dh);
        for (Index j = 0; j < n; ++j) {
          const double a = scores[j] / z;
          w(i * n + j, wcol) = a;
          yi += a * vv.col(j * positions + r).segment(row0, dh);
        }
      }
    }
  }
  if (weights_out != nullptr) {
    *weights_out = w;
  }

  Node * nq = q.node();
  Node * nk = k.node();
  Node * nv = v.node();
  const bool grad = any_grad({&q, &k, &v}) && q.tape().grad_enabled();
  if (!grad) {
    return q.tape().make(std::move(y), false, nullptr);
  }
  return q.tape().make(
    std::move(y), true,
    [nq, nk, nv, wt = std::move(w), n, positions, dh, n_heads, inv_sqrt](Node & out) {
      const Matrix & qv = nq->value;
      const Matrix & kv = nk->value;
      const Matrix & vv = nv->value;
      Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
      Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
      Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
      std::vector<double> da(static_cast<std::size_t>(n));
      for (Index r = 0; r < positions; ++r) {
        for (int h = 0; h < n_heads; ++h) {
          const Index row0 = h * dh;
          const Index wcol = h * positions + r;
          for (Index i = 0; i < n; ++i) {
            const auto gi = out.grad.col(i * positions + r).segment(row0, dh);
            double dot = 0.0;
            for (Index j = 0; j < n; ++j) {
              const double a = wt(i * n + j, wcol);
              dv.col(j * positions + r).segment(row0, dh) += a * gi;
              da[j] = gi.dot(vv.col(j * positions + r).segment(row0, dh));
              dot += a * da[j];
            }
            for (Index j = 0; j < n; ++j) {
              const double ds = wt(i * n + j, wcol) * (da[j] - dot) * inv_sqrt;
              dq.col(i * positions + r).segment(row0, dh) +=
                ds * kv.col(j * positions + r).segment(row0, dh);
              dk.col(j * positions + r).segment(row0, dh) +=
                ds * qv.col(i * positions + r).segment(row0, dh);
            }
          }
        }
      }
      accumulate(nq, dq);
      accumulate(nk, dk);
      accumulate(nv, dv);
    });
}

// ---------------------------------------------------------------------------
// Losses

Var masked_mse(const Var & pred, const Matrix & target, const Matrix & mask)
{
  require(
    pred.rows() == target.rows() && pred.cols() == target.cols() && mask.rows() == target.rows() &&
      mask.cols() == target.cols(),
    "masked_mse: shape mismatch");
  const double count = (mask.array() != 0.0).cast<double>().sum();
  const Matrix keep = (mask.array() != 0.0).cast<double>().matrix();
  const Matrix diff = (pred.value() - target).cwiseProduct(keep);
  const double loss = count > 0.0 ? diff.squaredNorm() / count : 0.0;
  Node * np = pred.node();
  return pred.tape().make(
    Matrix::Constant(1, 1, loss), pred.requires_grad(), [np, diff, count](Node & out) {
      if (count > 0.0) {
        accumulate(np, diff * (2.0 * out.grad(0, 0) / count));
      } else {
        accumulate(np, Matrix::Zero(diff.rows(), diff.cols()));
      }
    });
}

Var mean_sq_norm(const Var & pred, const Matrix & target)
{
  require(
    pred.rows() == target.rows() && pred.cols() == target.cols() && pred.cols() > 0,
    "mean_sq_norm: shape mismatch or empty");
  const Matrix diff = pred.value() - target;
  const double m = static_cast<double>(diff.cols());
  Node * np = pred.node();
  return pred.tape().make(
    Matrix::Constant(1, 1, diff.squaredNorm() / m), pred.requires_grad(), [np, diff, m](Node & out) {
      accumulate(np, diff * (2.0 * out.grad(0, 0) / m));
    });
}

Var softmax_cross_entropy(const Var & logits, std::span<const int> labels)
{
  require(
    static_cast<Index>(labels.size()) == logits.cols() && logits.cols() > 0,
    "softmax_cross_entropy: label count mismatch or empty");
  const Matrix & z = logits.value();
  Matrix p(z.rows(), z.cols());
  double loss = 0.0;
  for (Index j = 0; j < z.cols(); ++j) {
    const int label = labels[j];
    require(label >= 0 && label < z.rows(), "softmax_cross_entropy: label out of range");
    const double mx = z.col(j).maxCoeff();
    p.col(j) = (z.col(j).array() - mx).exp().matrix();
    const double s = p.col(j).sum();
    p.col(j) /= s;
    loss -= (z(label, j) - mx) - std::log(s);
  }
  const double m = static_cast<double>(z.cols());
  Matrix g = p;
  for (Index j = 0; j < z.cols(); ++j) {
    g(labels[j], j) -= 1.0;
  }
  Node * nl = logits.node();
  return logits.tape().make(
    Matrix::Constant(1, 1, loss / m), logits.requires_grad(),
    [nl, g = std::move(g), m](Node & out) { accumulate(nl, g * (out.grad(0, 0) / m)); });
}

Var sum_all(const Var & x)
{
  Node * nx = x.node();
  const Index r = x.rows();
  const Index c = x.cols();
  return x.tape().make(Matrix::Constant(1, 1, x.value().sum()), x.requires_grad(), [nx, r, c](Node & out) {
    accumulate(nx, Matrix::Constant(r, c, out.grad(0, 0)));
  });
}

// ---------------------------------------------------------------------------
// ParamStore

Parameter & ParamStore::add(const std::string & name, Matrix init)
{
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  it->second.value = std::move(init);
  it->second.zero_grad();
  return it->second;
}

Parameter & ParamStore::at(const std::string & name)
{
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

const Parameter & ParamStore::at(const std::string & name) const
{
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

void ParamStore::zero_grad()
{
  for (auto & [name, p] : params_) {
    p.zero_grad();
  }
}

std::size_t ParamStore::scalar_count() const
{
  std::size_t n = 0;
  for (const auto & [name, p] : params_) {
    n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

}  // namespace madiff::ag
