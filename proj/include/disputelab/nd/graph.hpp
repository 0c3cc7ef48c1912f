#pragma once

// Reverse-mode differentiation on dense 2-D tensors.
//
// A Graph is a tape: every operation appends a node holding its forward
// value and a backward rule. Graph::backward walks the tape from the end,
// so each node is visited once, after every node that consumed it.
// Gradients accumulate additively, which makes shared subexpressions work.

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "disputelab/common.hpp"

namespace disputelab::nd {

using Tensor = Matrix;

inline std::array<std::size_t, 2> shape(const Tensor& t) { return {t.rows, t.cols}; }
std::string shape_string(const Tensor& t);

class Graph;

// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  const Tensor& value() const;
  // Gradient after Graph::backward; zeros when none flowed here.
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, int)>;

  // With tracking off nothing requires a gradient and no backward rules
  // are stored; used for inference.
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Constant that refers to caller-owned storage; it must outlive the graph.
  Var constant_ref(const Tensor& value);
  // Owned leaf that receives a gradient.
  Var variable(Tensor value);
  // Leaf bound to caller-owned parameter storage; receives a gradient.
  Var parameter(const Tensor& value);

  // Appends an op node. It requires a gradient when any input does.
  Var record(Tensor value, std::vector<int> inputs, Backward backward);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Mutable gradient buffer, allocated as zeros on first use.
  Tensor& grad(int id);
  const Tensor& grad_or_zero(int id);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and runs every backward rule.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };
  Var push(Node node);
  bool track_ = true;
  std::vector<Node> nodes_;
};

}  // namespace disputelab::nd
