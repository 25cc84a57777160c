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

#ifndef MADIFF__AUTOGRAD_HPP_
#define MADIFF__AUTOGRAD_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

/**
 * Minimal reverse-mode differentiation over dense column-major matrices.
 *
 * Every value on the tape is a 2-D matrix. Sequence tensors use a "channels
 * by positions" layout: rows are feature channels, columns enumerate
 * (sequence, time) pairs with time varying fastest. A SeqLayout describes how
 * the columns split into sequences.
 */
namespace madiff::ag
{

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter
{
  Matrix value;
  Matrix grad;  // same shape as value once touched by backward()

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node
{
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  Parameter * param = nullptr;
  std::function<void(Node &)> backward;
};

class Tape;

class Var
{
public:
  Var() = default;
  Var(Tape * tape, Node * node) : tape_(tape), node_(node) {}

  const Matrix & value() const { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Tape & tape() const { return *tape_; }
  Node * node() const { return node_; }
  bool valid() const { return node_ != nullptr; }

private:
  Tape * tape_ = nullptr;
  Node * node_ = nullptr;
};

/// Records operations in creation order; backward() replays them in reverse.
class Tape
{
public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape &) = delete;
  Tape & operator=(const Tape &) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var param(Parameter & p);

  /// Creates an op node. `backward` is dropped when no input needs a gradient.
  Var make(Matrix value, bool requires_grad, std::function<void(Node &)> backward);

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every Parameter::grad.
  void backward(const Var & loss);

  std::size_t size() const { return nodes_.size(); }

private:
  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

/// Adds `g` into `n->grad`, allocating on first use.
template <typename Derived>
void accumulate(Node * n, const Eigen::MatrixBase<Derived> & g)
{
  if (!n->requires_grad) {
    return;
  }
  if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

struct SeqLayout
{
  Index n_seq = 1;
  Index length = 1;

  Index cols() const { return n_seq * length; }
};

// Dense algebra.
Var matmul(const Var & a, const Var & b);
Var add(const Var & a, const Var & b);
Var sub(const Var & a, const Var & b);
Var mul(const Var & a, const Var & b);
Var scale(const Var & a, double s);
Var add_bias(const Var & x, const Var & bias);
Var linear(const Var & x, const Var & weight, const Var & bias);
Var mish(const Var & x);

// Column / row plumbing.
Var concat_rows(const Var & a, const Var & b);
Var slice_cols(const Var & x, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
Var tile_cols(const Var & x, Index reps);
/// Column j becomes `fallback` (rows x 1) wherever use_fallback[j] is set.
Var select_cols(const Var & x, const Var & fallback, const std::vector<bool> & use_fallback);

// Sequence ops.
/// Weight is Cout x (kernel * Cin) with tap-major ordering; zero padding.
Var conv1d(
  const Var & x, const Var & weight, const Var & bias, SeqLayout layout, int kernel, int stride,
  int pad);
Var upsample_nearest(const Var & x, SeqLayout layout, int factor);
Var group_norm(
  const Var & x, const Var & gamma, const Var & beta, int groups, SeqLayout layout,
  double eps = 1e-5);
/// Adds e(:, s) to every column of sequence s.
Var add_per_sequence(const Var & x, const Var & e, SeqLayout layout);

/**
 * Scaled dot-product attention across the agent axis, independently for each
 * remaining column. Columns are agent-major: column a * (cols / n_agents) + r
 * belongs to agent a at position r. Heads split the rows into equal blocks.
 * When `weights_out` is given it receives the softmax weights as an
 * (n_agents * n_agents) x (n_heads * positions) matrix, row i * n + j.
 */
Var agent_attention(
  const Var & q, const Var & k, const Var & v, Index n_agents, int n_heads,
  Matrix * weights_out = nullptr);

// Losses (1 x 1 results).
/// Mean of squared error over entries where mask != 0.
Var masked_mse(const Var & pred, const Matrix & target, const Matrix & mask);
/// Mean over columns of the squared Euclidean column error.
Var mean_sq_norm(const Var & pred, const Matrix & target);
/// Mean over columns of -log softmax(logits)[label].
Var softmax_cross_entropy(const Var & logits, std::span<const int> labels);
Var sum_all(const Var & x);

/// Named parameters in a deterministic (lexicographic) order.
class ParamStore
{
public:
  Parameter & add(const std::string & name, Matrix init);
  Parameter & at(const std::string & name);
  const Parameter & at(const std::string & name) const;
  bool contains(const std::string & name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

private:
  std::map<std::string, Parameter> params_;
};

}  // namespace madiff::ag

#endif  // MADIFF__AUTOGRAD_HPP_
