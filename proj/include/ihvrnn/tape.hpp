#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape owns every intermediate value of one forward pass. Ops append a node
// holding the output value and a closure that pushes the output gradient back
// to the inputs. Nodes are immutable once recorded, so copying a Var (or a
// struct of Vars) never aliases mutable state.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "ihvrnn/matrix.hpp"

namespace ihvrnn::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Matrix& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var record(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Accumulation buffer for node `id`, zero-initialized on first access.
  Matrix& grad(int id);
  // Gradient reached by the last backward pass; zeros if none flowed here.
  Matrix grad_of(Var v) const;

  // Seeds d(root)/d(root) = 1 and propagates. `root` must be 1 x 1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
// alpha * a + beta, elementwise.
Var affine(Var a, double alpha, double beta = 0.0);
inline Var scale(Var a, double alpha) { return affine(a, alpha, 0.0); }
// a + constant matrix of the same shape.
Var add_constant(Var a, const Matrix& c);
// a * constant matrix of the same shape.
Var mul_constant(Var a, const Matrix& c);

Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var leaky_relu(Var a, double slope);

// x [n x in] * w [in x out] + b [1 x out]; `b` may be an invalid Var.
Var linear(Var x, Var w, Var b = {});
Var matmul(Var a, Var b);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, int first, int count);
Var gather_rows(Var a, std::span<const int> index);
// Row g of the output is the sum (or mean) of rows `groups[g]` of `a`,
// accumulated in an order that does not depend on member order. Empty groups
// produce zero rows.
Var pool_rows(Var a, const std::vector<std::vector<int>>& groups, bool mean);
// Row r is a.row(r) where take_first[r], else b.row(r).
Var select_rows(const std::vector<uint8_t>& take_first, Var a, Var b);

Var sum(Var a);
Var row_sum(Var a);

// out(i, j) = u(i) + v(j) for column vectors u [n x 1], v [m x 1].
Var outer_add(Var u, Var v);
// Row-wise softmax over entries where mask != 0; masked entries are exactly 0.
Var masked_softmax_rows(Var e, std::span<const uint8_t> mask);
// out(i, c) = sum_j alpha(i, j) * v(j, c), order-independent over j.
Var attend(Var alpha, Var v);

// Per-row closed-form KL(q || p) between diagonal Gaussians given by
// (mean, standard deviation); result [n x 1].
Var kl_diag_rows(Var q_mean, Var q_scale, Var p_mean, Var p_scale);
// Per-row negative log density of x under a diagonal Gaussian; [n x 1].
Var gaussian_nll_rows(Var x, Var mean, Var scale);

}  // namespace ihvrnn::ad
