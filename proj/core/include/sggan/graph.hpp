#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sggan/tensor.hpp"

namespace sggan {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order, so backward() is a single reverse sweep.
/// One graph per forward/backward pass; not thread safe.
class Graph {
 public:
  /// Called with the graph and the node id whose output gradient is ready.
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient.
  Var variable(Tensor value);

  /// Record an op output. If none of `inputs` requires a gradient the node
  /// is gradient-blocked and `fn` is dropped.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, std::string op);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }

  /// Gradient of the last backward() loss w.r.t. `v` (zeros if unreached).
  Tensor grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape once. The loss must be a
  /// scalar; a second call on the same graph throws.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  std::size_t size() const { return nodes_.size(); }

  // Used by op backward rules.
  const std::vector<float>& out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  /// Mutable gradient buffer for `v`, zero-initialised on first access.
  /// Returns nullptr when `v` does not require a gradient.
  float* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<float> grad;
    BackwardFn backward;
    std::string op;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sggan
