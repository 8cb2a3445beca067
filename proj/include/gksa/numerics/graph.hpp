#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gksa/numerics/matrix.hpp"

namespace gksa {

// A trainable tensor with its accumulated gradient.
struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  bool defined() const { return !value.empty(); }
  void zero_grad() {
    if (defined()) grad.fill(0.0);
  }
};

// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id() const { return id_; }
  bool valid() const { return id_ != kInvalid; }

 private:
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id_ = kInvalid;
};

// Reverse-mode tape over whole matrices. Nodes are appended in evaluation
// order, so reverse creation order is a valid topological order for the
// backward sweep. Each op carries a hand-written analytic adjoint.
//
// The graph also counts the elements of every intermediate it materializes;
// nothing is released before the graph dies, so that count is the
// high-water mark of the forward pass.
class Graph {
 public:
  // Adjoint of one node: read grad(self) and accumulate into its inputs.
  using Backward = std::function<void(Graph&, Var self)>;

  Var input(Matrix value);
  Var param(Parameter& p);
  // Records a custom op. `backward` may be empty for non-differentiable outputs.
  Var op(Matrix value, Backward backward);

  const Matrix& value(Var v) const;
  // Gradient of the loss w.r.t. v after backward(); zeros if v was unreached.
  Matrix grad(Var v) const;
  // Mutable accumulator for v's gradient, allocated as zeros on first access.
  Matrix& grad_accumulator(Var v);
  bool has_grad(Var v) const;

  // Runs the backward sweep from a 1x1 loss and adds into every bound
  // Parameter's grad. May be called once per graph.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }
  // Elements held by op outputs (leaves excluded).
  std::size_t intermediate_elements() const { return intermediate_elements_; }
  std::size_t leaf_elements() const { return leaf_elements_; }

  // ---- differentiable ops -------------------------------------------------
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  // m(i, :) += v for a 1 x cols row vector v.
  Var add_row_vector(Var m, Var v);
  // m(:, j) += v for a rows x 1 column vector v.
  Var add_col_vector(Var m, Var v);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps);
  Var append_constant_col(Var x, double value);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  Var sum(Var a);
  // out(i, j) = |q_i - q_j|^2 over rows of q.
  Var pairwise_sq_dist(Var q);
  // out(i, j) = scores(i, j) - (i - j)^2 / (2 sigma^2), sigma = exp(log_sigma).
  Var add_gaussian_window(Var scores, Var log_sigma);
  // m is L x (2L-1) with column r + L - 1 holding relative offset r:
  // out(i, j) = m(i, (i - j) + L - 1).
  Var relative_gather(Var m);
  // v is 1 x (2L-1): out(i, j) = v(0, (i - j) + L - 1).
  Var relative_gather_row(Var v);
  // Concatenates `factor` consecutive rows into one, zero-padding the tail.
  Var stack_frames(Var x, std::size_t factor);

 private:
  struct Node {
    Matrix value;
    Backward backward;
    Parameter* param = nullptr;
  };

  void check(Var v) const;
  Var push(Matrix value, Backward backward, Parameter* param, bool leaf);

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::size_t intermediate_elements_ = 0;
  std::size_t leaf_elements_ = 0;
  bool backward_done_ = false;
};

}  // namespace gksa
