#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "carekit/numkit/errors.hpp"
#include "carekit/numkit/rng.hpp"
#include "carekit/numkit/tensor.hpp"

namespace carekit {

using NodeId = std::size_t;

template <typename Scalar>
class Graph;

/// Lightweight handle to a node recorded on a Graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return graph_->shape(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool needs_grad() const { return graph_->needs_grad(id_); }

  /// Value of a single-element node.
  Scalar item() const {
    if (value().size() != 1) throw DimensionError("item() on non-scalar " + shape_string(shape()));
    return value()(0, 0);
  }

  /// Gradient accumulated on this node by the last backward sweep.
  const Matrix<Scalar>& grad() const { return graph_->grad(id_); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Tape of primitive applications in topological (recording) order.
///
/// Nodes are appended as primitives run, so every node's inputs precede it.
/// Leaves bound to external tensors accumulate their gradients straight into
/// those tensors; intermediate gradients live on the tape and are reset at the
/// start of every backward sweep.
template <typename Scalar>
class Graph {
 public:
  using MatrixType = Matrix<Scalar>;
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  explicit Graph(CounterRng rng = CounterRng{}) : rng_(rng) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// A value that never receives gradient.
  Var<Scalar> constant(MatrixType value, Shape shape = {}) {
    if (shape.empty()) shape = {value.rows(), value.cols()};
    Node node;
    node.op = "constant";
    node.shape = std::move(shape);
    node.value = std::move(value);
    check_finite(node);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  /// Binds an external tensor (typically a parameter) as a leaf.
  Var<Scalar> input(std::shared_ptr<Tensor<Scalar>> tensor) {
    if (!tensor) throw ContractError("null tensor bound to graph");
    Node node;
    node.op = "input";
    node.shape = tensor->shape();
    node.needs_grad = grad_enabled_ && tensor->requires_grad();
    node.bound = std::move(tensor);
    check_finite(node);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  /// Appends the result of a primitive. `backward` receives the graph and the
  /// output node id and must accumulate into the inputs' gradients.
  Var<Scalar> record(const char* op, MatrixType value, Shape shape,
                     std::vector<NodeId> inputs, BackwardFn backward) {
    Node node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(value);
    for (NodeId in : inputs) node.needs_grad = node.needs_grad || needs_grad(in);
    node.inputs = std::move(inputs);
    if (node.needs_grad) node.backward = std::move(backward);
    check_finite(node);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  const MatrixType& value(NodeId id) const {
    const Node& node = nodes_.at(id);
    return node.bound ? node.bound->data() : node.value;
  }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

  /// Gradient slot of a node, zero-initialized on first access.
  MatrixType& grad(NodeId id) {
    Node& node = nodes_.at(id);
    if (node.bound) return node.bound->grad();
    if (!node.has_grad) {
      node.grad = MatrixType::Zero(node.value.rows(), node.value.cols());
      node.has_grad = true;
    }
    return node.grad;
  }

  /// Reverse sweep from a scalar root. Bound leaves accumulate across calls.
  void backward(Var<Scalar> root) {
    if (&root.graph() != this) throw ContractError("backward root belongs to another graph");
    if (root.value().size() != 1) {
      throw ContractError("backward root must be scalar, got shape " + shape_string(root.shape()));
    }
    for (Node& node : nodes_) {
      if (!node.bound) {
        node.has_grad = false;
        node.grad.resize(0, 0);
      }
    }
    if (!needs_grad(root.id())) return;
    grad(root.id())(0, 0) += Scalar(1);
    for (NodeId id = root.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.backward || !node.has_grad) continue;
      node.backward(*this, id);
    }
  }

  /// When disabled, bound tensors are treated as constants and no backward
  /// closures are kept (inference).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  CounterRng& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }
  const char* op(NodeId id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    const char* op = "";
    Shape shape;
    MatrixType value;
    MatrixType grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    std::shared_ptr<Tensor<Scalar>> bound;
  };

  static void check_finite(const Node& node) {
    const MatrixType& v = node.bound ? node.bound->data() : node.value;
    if (!v.allFinite()) {
      throw NumericError(std::string("non-finite value produced by '") + node.op + "'");
    }
  }

  std::vector<Node> nodes_;
  CounterRng rng_;
  bool grad_enabled_ = true;
};

}  // namespace carekit
