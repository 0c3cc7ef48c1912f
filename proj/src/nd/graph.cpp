#include "disputelab/nd/graph.hpp"

namespace disputelab::nd {

std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]";
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad_or_zero(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Graph::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = track_;
  return push(std::move(n));
}

Var Graph::parameter(const Tensor& value) {
  Node n;
  n.external = &value;
  n.requires_grad = track_;
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::vector<int> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (int in : inputs) n.requires_grad = n.requires_grad || requires_grad(in);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.owned;
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    const Tensor& v = n.external ? *n.external : n.owned;
    n.grad = Tensor(v.rows, v.cols, 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Graph::grad_or_zero(int id) { return grad(id); }

void Graph::backward(Var root) {
  if (root.graph_ != this) throw Error("backward: root belongs to another graph");
  const Tensor& v = value(root.id());
  if (v.rows != 1 || v.cols != 1) throw Error("backward: root must be a scalar, got " + shape_string(v));
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && n.has_grad) n.backward(*this, id);
  }
}

}  // namespace disputelab::nd
