#include "sggan/graph.hpp"

namespace sggan {

const Tensor& Var::value() const { return graph->value(*this); }
bool Var::requires_grad() const { return graph->requires_grad(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, {}, {}, "constant"});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, {}, {}, "variable"});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, std::string op) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.graph != this) throw std::logic_error(op + ": input belongs to another graph");
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node node{std::move(value), needs, {}, needs ? std::move(fn) : BackwardFn{}, std::move(op)};
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Graph::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0f);
  return Tensor(node.value.shape(), node.grad);
}

float* Graph::grad_buffer(Var v) {
  Node& node = nodes_.at(v.id);
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0f);
  return node.grad.data();
}

void Graph::backward(Var loss) {
  if (backward_done_) {
    throw std::logic_error("backward() already ran on this graph; build a new graph per pass");
  }
  const Node& root = nodes_.at(loss.id);
  if (root.value.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + root.value.shape().str());
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss)[0] = 1.0f;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
  }
}

}  // namespace sggan
