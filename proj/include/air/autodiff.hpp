#pragma once

#include <functional>
#include <vector>

#include "air/geometry.hpp"
#include "air/tensor.hpp"

namespace air {

class Graph;

/// Handle to a node in a ComputationGraph. Cheap to copy; owns nothing.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape(); }
  int id() const { return id_; }
  Graph* graph() const { return g_; }
  bool valid() const { return g_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  int id_ = -1;
};

/// Dynamically recorded computation graph (tape) for reverse-mode autodiff.
/// Nodes are appended in evaluation order, which is topological by
/// construction; backward() walks the tape in reverse and accumulates
/// gradients on fan-out. One graph per thread of execution; rebuilt per
/// forward pass.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Adds an input node. Gradient is tracked when t.requires_grad() is set.
  Var leaf(Tensor t);
  /// Adds an input node that never receives gradient.
  Var constant(Tensor t);

  Var conv2d(Var x, Var w, Var b, int stride, int padding, int dilation);
  Var linear(Var x, Var w, Var b);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, float s);
  Var add_scalar(Var a, float c);
  Var reduce_mean(Var x);
  /// Sum of squared differences, a scalar.
  Var squared_l2(Var a, Var b);
  Var reshape(Var x, std::vector<int> shape);
  /// Concatenates along the channel axis: [C,H,W] pairs or [N,C,H,W] pairs.
  Var concat_channels(Var a, Var b);
  /// k same-shape items -> one tensor with a new leading axis of extent k.
  Var stack(const std::vector<Var>& items);
  /// Row i of a [N,F] tensor as a [F] vector.
  Var row(Var x, int i);
  /// Rows [begin, end) of a [N,F] tensor.
  Var rows(Var x, int begin, int end);

  /// Rigid params [theta,tx,ty] -> affine entries [cos,-sin,tx,sin,cos,ty].
  Var rigid_matrix(Var p);
  /// Sample grid [H,W,2] from affine entries [6].
  Var affine_grid(Var m6, int H, int W);
  /// Pull-style bilinear resampling; differentiable in image and grid.
  Var bilinear_sample(Var image, Var grid);
  /// bilinear_sample(image, affine_grid(rigid_matrix(p), H, W)).
  Var warp(Var image, Var p3);

  /// Reverse-mode sweep from a scalar root. Every requires_grad leaf ends up
  /// with a gradient tensor of its own shape (zero where the root does not
  /// depend on it).
  void backward(Var root);

  const Tensor& value(Var v) const;
  /// Gradient of a node; throws if backward() has not populated it.
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;
  size_t size() const;

  /// True when this node's gradient is required by some requires_grad leaf.
  bool wants_grad(int id) const;

 private:
  struct Node;
  int push(Tensor value, bool wants, bool leaf_requires,
           std::function<void(Graph&, const Tensor&)> backprop, const char* op);
  Tensor& grad_buf(int id);
  const Node& node(int id) const;
  Node& node(int id);

  std::vector<Node>* nodes_;
};

/// NaN/Inf screening of every op output. Defaults to on in debug builds or
/// when AIR_CHECK_NAN=1 is set in the environment.
bool nan_checks_enabled();
void set_nan_checks(bool enabled);

}  // namespace air
