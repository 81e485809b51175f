#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sltgen/ops.hpp"
#include "sltgen/tensor.hpp"

namespace sltgen {

using NodeId = std::size_t;

enum class OpKind {
  input,
  matmul,
  add,
  conv2d,
  relu,
  tanh,
  batchnorm,
  upsample2x,
  reshape,
  mean,
  sum,
  square,
  mul,
};

const char* op_name(OpKind kind);

/// Named input tensors for one forward pass. Bound tensors are referenced,
/// not copied, and must outlive the call to Graph::forward.
class Feed {
 public:
  Feed& bind(const std::string& name, const Tensor& tensor) {
    bound_[name] = &tensor;
    return *this;
  }
  const Tensor* find(const std::string& name) const {
    auto it = bound_.find(name);
    return it == bound_.end() ? nullptr : it->second;
  }

 private:
  std::map<std::string, const Tensor*> bound_;
};

/// Upstream gradient injected at a node; used when the loss is evaluated
/// outside the graph and only its gradient w.r.t. some nodes is known.
struct GradientSeed {
  NodeId node;
  Tensor grad;
};

/// Gradients of every requires_grad input, keyed by input name.
using Gradients = std::map<std::string, Tensor>;

/// Static computation graph over the closed operator catalog. Nodes are
/// appended in topological order, so every input id precedes its consumer.
/// Forward/backward state lives in the graph: one run at a time.
class Graph {
 public:
  NodeId input(const std::string& name);
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId conv2d(NodeId x, NodeId w, std::size_t stride, std::size_t padding);
  NodeId relu(NodeId x);
  NodeId tanh(NodeId x);
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, ops::BatchNormParams params);
  NodeId upsample2x(NodeId x);
  /// A zero entry in `shape` is inferred from the element count (at most one).
  NodeId reshape(NodeId x, Shape shape);
  NodeId mean(NodeId x);
  NodeId sum(NodeId x);
  NodeId square(NodeId x);
  NodeId mul(NodeId a, NodeId b);

  /// Optional human-readable label used in error messages.
  void set_label(NodeId id, std::string label);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::string& label(NodeId id) const { return nodes_.at(id).label; }
  std::optional<NodeId> find_input(const std::string& name) const;

  /// Evaluates every node. Throws ConfigError for unbound inputs and
  /// ShapeError (naming the node) for incompatible shapes.
  void forward(const Feed& feed);

  const Tensor& value(NodeId id) const;

  /// Reverse pass from a scalar node. Returns gradients of every input whose
  /// bound tensor has requires_grad set; inputs not reached get zeros.
  Gradients backward(NodeId loss);
  Gradients backward(const std::vector<GradientSeed>& seeds);

  /// Gradient of an intermediate node from the last backward pass, if the
  /// node depends on a requires_grad input.
  const Tensor* grad(NodeId id) const;

 private:
  struct Node {
    Node(OpKind k, std::vector<NodeId> in = {}) : kind(k), inputs(std::move(in)) {}

    OpKind kind;
    std::vector<NodeId> inputs;
    std::string label;
    std::string input_name;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Shape reshape_to;
    ops::BatchNormParams bn;
  };

  NodeId push(Node node);
  void eval_node(NodeId id);
  void backprop_node(NodeId id);
  void accumulate(NodeId id, const Tensor& g);
  std::string describe(NodeId id) const;

  std::vector<Node> nodes_;
  // Per-run state.
  std::vector<Tensor> values_;
  std::vector<ops::BatchNormSaved> bn_saved_;
  std::vector<bool> needs_grad_;
  std::vector<std::optional<Tensor>> grads_;
  bool forward_done_ = false;
};

}  // namespace sltgen
