#include "sltgen/graph.hpp"

#include "sltgen/error.hpp"

namespace sltgen {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::upsample2x: return "upsample2x";
    case OpKind::reshape: return "reshape";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
    case OpKind::mul: return "mul";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  for (auto in : node.inputs) {
    if (in >= nodes_.size()) throw ConfigError("graph: input node " + std::to_string(in) + " does not exist");
  }
  nodes_.push_back(std::move(node));
  forward_done_ = false;
  return nodes_.size() - 1;
}

NodeId Graph::input(const std::string& name) {
  if (find_input(name)) throw ConfigError("graph: duplicate input name '" + name + "'");
  Node n{OpKind::input};
  n.input_name = name;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) { return push({OpKind::matmul, {a, b}}); }
NodeId Graph::add(NodeId a, NodeId b) { return push({OpKind::add, {a, b}}); }

NodeId Graph::conv2d(NodeId x, NodeId w, std::size_t stride, std::size_t padding) {
  Node n{OpKind::conv2d, {x, w}};
  n.stride = stride;
  n.padding = padding;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) { return push({OpKind::relu, {x}}); }
NodeId Graph::tanh(NodeId x) { return push({OpKind::tanh, {x}}); }

NodeId Graph::batchnorm(NodeId x, NodeId gamma, NodeId beta, ops::BatchNormParams params) {
  Node n{OpKind::batchnorm, {x, gamma, beta}};
  n.bn = std::move(params);
  return push(std::move(n));
}

NodeId Graph::upsample2x(NodeId x) { return push({OpKind::upsample2x, {x}}); }

NodeId Graph::reshape(NodeId x, Shape shape) {
  Node n{OpKind::reshape, {x}};
  n.reshape_to = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::mean(NodeId x) { return push({OpKind::mean, {x}}); }
NodeId Graph::sum(NodeId x) { return push({OpKind::sum, {x}}); }
NodeId Graph::square(NodeId x) { return push({OpKind::square, {x}}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push({OpKind::mul, {a, b}}); }

void Graph::set_label(NodeId id, std::string label) { nodes_.at(id).label = std::move(label); }

std::optional<NodeId> Graph::find_input(const std::string& name) const {
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::input && nodes_[i].input_name == name) return i;
  }
  return std::nullopt;
}

std::string Graph::describe(NodeId id) const {
  const auto& n = nodes_[id];
  std::string s = "node " + std::to_string(id) + " (" + op_name(n.kind);
  if (!n.label.empty()) s += " '" + n.label + "'";
  return s + ")";
}

void Graph::forward(const Feed& feed) {
  values_.assign(nodes_.size(), Tensor{});
  bn_saved_.assign(nodes_.size(), ops::BatchNormSaved{});
  needs_grad_.assign(nodes_.size(), false);
  grads_.clear();
  forward_done_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const auto& n = nodes_[id];
    if (n.kind == OpKind::input) {
      const Tensor* t = feed.find(n.input_name);
      if (!t) throw ConfigError("graph: unknown or unbound input '" + n.input_name + "'");
      values_[id] = *t;
      needs_grad_[id] = t->requires_grad();
      continue;
    }
    for (auto in : n.inputs) needs_grad_[id] = needs_grad_[id] || needs_grad_[in];
    try {
      eval_node(id);
    } catch (const ShapeError& e) {
      throw ShapeError(describe(id) + ": " + e.what());
    }
  }
  forward_done_ = true;
}

void Graph::eval_node(NodeId id) {
  const auto& n = nodes_[id];
  auto in = [&](std::size_t i) -> const Tensor& { return values_[n.inputs[i]]; };
  Tensor out;
  switch (n.kind) {
    case OpKind::input: return;
    case OpKind::matmul: out = ops::matmul(in(0), in(1)); break;
    case OpKind::add: out = ops::add(in(0), in(1)); break;
    case OpKind::conv2d: out = ops::conv2d(in(0), in(1), n.stride, n.padding); break;
    case OpKind::relu: out = ops::relu(in(0)); break;
    case OpKind::tanh: out = ops::tanh(in(0)); break;
    case OpKind::batchnorm: out = ops::batchnorm(in(0), in(1), in(2), n.bn, &bn_saved_[id]); break;
    case OpKind::upsample2x: out = ops::upsample2x(in(0)); break;
    case OpKind::reshape: {
      Shape target = n.reshape_to;
      std::size_t known = 1, infer_at = target.size();
      for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0) {
          if (infer_at != target.size()) throw ShapeError("reshape: more than one inferred dimension");
          infer_at = i;
        } else {
          known *= target[i];
        }
      }
      if (infer_at != target.size()) {
        if (in(0).size() % known != 0) {
          throw ShapeError("reshape: cannot infer dimension of " + shape_string(target) + " from " +
                           shape_string(in(0).shape()));
        }
        target[infer_at] = in(0).size() / known;
      }
      if (numel(target) != in(0).size()) {
        throw ShapeError("reshape: " + shape_string(in(0).shape()) + " to " + shape_string(target));
      }
      out = in(0).reshaped(target);
      break;
    }
    case OpKind::mean: out = ops::mean(in(0)); break;
    case OpKind::sum: out = ops::sum(in(0)); break;
    case OpKind::square: out = ops::square(in(0)); break;
    case OpKind::mul: out = ops::mul(in(0), in(1)); break;
  }
  out.set_requires_grad(false);
  values_[id] = std::move(out);
}

const Tensor& Graph::value(NodeId id) const {
  if (!forward_done_) throw ConfigError("graph: value requested before forward");
  return values_.at(id);
}

const Tensor* Graph::grad(NodeId id) const {
  if (id >= grads_.size() || !grads_[id]) return nullptr;
  return &*grads_[id];
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  if (!needs_grad_[id]) return;
  auto& slot = grads_[id];
  if (!slot) {
    slot = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
}

Gradients Graph::backward(NodeId loss) {
  if (!forward_done_) throw ConfigError("graph: backward before forward");
  if (values_.at(loss).size() != 1) {
    throw ShapeError("graph: backward from non-scalar " + describe(loss) + " of shape " +
                     shape_string(values_[loss].shape()));
  }
  return backward({GradientSeed{loss, Tensor(values_[loss].shape(), 1.0)}});
}

Gradients Graph::backward(const std::vector<GradientSeed>& seeds) {
  if (!forward_done_) throw ConfigError("graph: backward before forward");
  grads_.assign(nodes_.size(), std::nullopt);
  NodeId last = 0;
  for (const auto& s : seeds) {
    if (s.node >= nodes_.size()) throw ConfigError("graph: seed node does not exist");
    if (s.grad.shape() != values_[s.node].shape()) {
      throw ShapeError("graph: seed gradient " + shape_string(s.grad.shape()) + " does not match " +
                       describe(s.node) + " of shape " + shape_string(values_[s.node].shape()));
    }
    accumulate(s.node, s.grad);
    last = std::max(last, s.node);
  }
  // Reverse topological order: each node is visited once, after all consumers.
  for (NodeId id = last + 1; id-- > 0;) {
    if (grads_[id] && nodes_[id].kind != OpKind::input) backprop_node(id);
  }
  Gradients out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const auto& n = nodes_[id];
    if (n.kind != OpKind::input || !needs_grad_[id]) continue;
    out[n.input_name] = grads_[id] ? *grads_[id] : Tensor(values_[id].shape());
  }
  return out;
}

void Graph::backprop_node(NodeId id) {
  const auto& n = nodes_[id];
  const Tensor& g = *grads_[id];
  auto in = [&](std::size_t i) -> const Tensor& { return values_[n.inputs[i]]; };
  auto wants = [&](std::size_t i) { return static_cast<bool>(needs_grad_[n.inputs[i]]); };
  switch (n.kind) {
    case OpKind::input: break;
    case OpKind::matmul: {
      Tensor ga, gb;
      ops::matmul_backward(in(0), in(1), g, wants(0) ? &ga : nullptr, wants(1) ? &gb : nullptr);
      if (wants(0)) accumulate(n.inputs[0], ga);
      if (wants(1)) accumulate(n.inputs[1], gb);
      break;
    }
    case OpKind::add:
      if (wants(0)) accumulate(n.inputs[0], g);
      if (wants(1)) accumulate(n.inputs[1], ops::add_backward_rhs(in(0), in(1), g));
      break;
    case OpKind::conv2d: {
      Tensor gx, gw;
      ops::conv2d_backward(in(0), in(1), n.stride, n.padding, g, wants(0) ? &gx : nullptr,
                           wants(1) ? &gw : nullptr);
      if (wants(0)) accumulate(n.inputs[0], gx);
      if (wants(1)) accumulate(n.inputs[1], gw);
      break;
    }
    case OpKind::relu: accumulate(n.inputs[0], ops::relu_backward(in(0), g)); break;
    case OpKind::tanh: accumulate(n.inputs[0], ops::tanh_backward(values_[id], g)); break;
    case OpKind::batchnorm: {
      Tensor gx, ggamma, gbeta;
      ops::batchnorm_backward(in(0), in(1), n.bn, bn_saved_[id], g, wants(0) ? &gx : nullptr,
                              wants(1) ? &ggamma : nullptr, wants(2) ? &gbeta : nullptr);
      if (wants(0)) accumulate(n.inputs[0], gx);
      if (wants(1)) accumulate(n.inputs[1], ggamma);
      if (wants(2)) accumulate(n.inputs[2], gbeta);
      break;
    }
    case OpKind::upsample2x: accumulate(n.inputs[0], ops::upsample2x_backward(g)); break;
    case OpKind::reshape: accumulate(n.inputs[0], g.reshaped(in(0).shape())); break;
    case OpKind::mean:
      accumulate(n.inputs[0], Tensor(in(0).shape(), g.item() / static_cast<double>(in(0).size())));
      break;
    case OpKind::sum: accumulate(n.inputs[0], Tensor(in(0).shape(), g.item())); break;
    case OpKind::square: {
      Tensor gx = g;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 2.0 * in(0)[i];
      accumulate(n.inputs[0], gx);
      break;
    }
    case OpKind::mul:
      if (wants(0)) accumulate(n.inputs[0], ops::mul(g, in(1)));
      if (wants(1)) accumulate(n.inputs[1], ops::mul(g, in(0)));
      break;
  }
}

}  // namespace sltgen
