#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dmask/numeric.hpp"
#include "dmask/rng.hpp"

namespace dmask {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

/// Reverse-mode autodiff over dense Eigen matrices.
///
/// Nodes are appended in construction order, which is a valid topological
/// order, so backward() is a single reverse sweep. A tape is built per
/// training step and discarded; parameters live outside the tape and are
/// registered as leaves each step.
class Tape {
 public:
  /// Backward callback: receives the tape and this node's gradient.
  using BackFn = std::function<void(Tape&, const Mat&)>;

  Var leaf(Mat value, bool requires_grad);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  /// Runs the reverse sweep from a 1x1 loss node.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }
  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  /// Gradient accumulator for a node, allocated as zeros on first touch.
  Mat& grad(int id);
  bool grad_allocated(int id) const { return nodes_[static_cast<size_t>(id)].grad_allocated; }

  Var push(Mat value, bool requires_grad, BackFn back);

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackFn back;
    bool requires_grad = false;
    bool grad_allocated = false;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise / linear algebra ----
Var matmul(Var a, Var b);
Var add(Var a, Var b);                 // same shape
Var add_rowvec(Var a, Var r);          // broadcast 1xC over rows of a
Var sub(Var a, Var b);
Var cmul(Var a, Var b);                // Hadamard
Var scale(Var a, double c);
Var tanh_of(Var a);
Var gelu_of(Var a);
Var transpose_of(Var a);
Var affine(Var x, Var w, Var b);       // x*w + b (b broadcast)

// ---- shape ops ----
Var slice_rows(Var a, int start, int n);
Var slice_cols(Var a, int start, int n);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var tile_rows(Var row, int n);         // 1xC -> nxC
Var gather_rows(Var table, std::vector<int> idx);

// ---- reductions ----
Var sum_all(Var a);                    // 1x1
Var div_by_scalar(Var a, Var s);       // s is 1x1

// ---- nonlinears with structure ----
Var softmax_rows_of(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var cross_entropy_logits(Var logits, int label);  // logits 1xC -> 1x1

// ---- special-purpose ----
/// Forward identity, backward negation.
Var grad_reverse(Var a);

/// Forward emits `hard` exactly; backward routes gradients to `soft`
/// unchanged (straight-through estimator).
Var straight_through(const Mat& hard, Var soft);

/// Per-row blend: y_i = (1 - m_i) * e_i + m_i * r, with m Nx1 and r 1xC.
Var blend_rows(Var e, Var m, Var r);

/// Inverted dropout; draws exactly rows*cols uniforms from rng.
Var dropout_of(Var a, double rate, RngStream& rng);

}  // namespace dmask
