#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqadv/core/tensor.hpp"

namespace seqadv {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind {
  Constant,
  Parameter,
  MatMul,
  Add,
  AddRow,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Tanh,
  Sigmoid,
  Log,
  Exp,
  Softmax,
  MaskedSoftmax,
  ConcatCols,
  SliceCols,
  Sum,
  Mean,
  Clamp,
  SelectRows,
  GatherRows,
  ScaleRows,
  Custom,
};

class Graph;

/// Receives the gradient of the loss with respect to the node's output and
/// accumulates into the node's inputs through Graph::accumulate.
using BackwardFn =
    std::function<void(Graph&, NodeId self, const Tensor& grad_out)>;

/// Append-only tape. Every recorded node refers only to earlier nodes, so a
/// reverse sweep over the tape is a valid topological order.
class Graph {
 public:
  Graph() = default;
  /// With track_gradients == false parameters enter as constants and no
  /// backward closures are kept; used for pure inference.
  explicit Graph(bool track_gradients) : track_(track_gradients) {}

  bool tracks_gradients() const { return track_; }

  NodeId constant(Tensor value) {
    return push(OpKind::Constant, std::move(value), {}, {}, false);
  }

  /// Binds a named parameter. Binding the same name twice returns the
  /// existing leaf so that shared weights accumulate a single gradient.
  NodeId parameter(const std::string& name, const Tensor& value) {
    if (auto it = params_.find(name); it != params_.end()) return it->second;
    NodeId id = push(OpKind::Parameter, value, {}, {}, track_);
    params_.emplace(name, id);
    return id;
  }

  NodeId parameter(const ParameterStore& store, const std::string& name) {
    return parameter(name, store.at(name));
  }

  NodeId record(OpKind kind, Tensor value, std::vector<NodeId> inputs,
                BackwardFn backward) {
    bool needs = false;
    for (NodeId in : inputs) {
      check(in);
      needs = needs || nodes_[in.index].requires_grad;
    }
    if (!needs) backward = {};
    return push(kind, std::move(value), std::move(inputs), std::move(backward), needs);
  }

  const Tensor& value(NodeId id) const {
    check(id);
    return nodes_[id.index].value;
  }
  OpKind kind(NodeId id) const {
    check(id);
    return nodes_[id.index].kind;
  }
  const std::vector<NodeId>& inputs(NodeId id) const {
    check(id);
    return nodes_[id.index].inputs;
  }
  bool requires_grad(NodeId id) const {
    check(id);
    return nodes_[id.index].requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Clears gradients of any previous sweep,
  /// so the same forward tape may be differentiated for several losses.
  void backward(NodeId loss) {
    check(loss);
    if (nodes_[loss.index].value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_string(nodes_[loss.index].value.shape()));
    grads_.assign(nodes_.size(), Tensor{});
    if (!nodes_[loss.index].requires_grad) return;
    grads_[loss.index] = Tensor(nodes_[loss.index].value.shape(), 1.0);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (grads_[i].empty() || !node.backward) continue;
      node.backward(*this, NodeId{i}, grads_[i]);
    }
  }

  /// Gradient slot of a node; empty when the node did not receive one.
  const Tensor& grad(NodeId id) const {
    check(id);
    static const Tensor none;
    return id.index < grads_.size() ? grads_[id.index] : none;
  }

  void accumulate(NodeId id, const Tensor& g) {
    Tensor& slot = grad_slot(id);
    if (slot.empty()) return;
    if (slot.size() != g.size())
      throw std::logic_error("accumulate: gradient size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
  }

  /// Mutable gradient slot, zero-initialized on first use. Returns an empty
  /// tensor for nodes that do not require gradients.
  Tensor& grad_slot(NodeId id) {
    check(id);
    static thread_local Tensor discard;
    if (!nodes_[id.index].requires_grad) {
      discard = Tensor{};
      return discard;
    }
    Tensor& slot = grads_[id.index];
    if (slot.empty()) slot = Tensor(nodes_[id.index].value.shape(), 0.0);
    return slot;
  }

  /// Gradients of every bound parameter after backward().
  Gradients parameter_gradients() const {
    Gradients out;
    for (const auto& [name, id] : params_) {
      const Tensor& g = grad(id);
      out.emplace(name, g.empty() ? Tensor(value(id).shape(), 0.0) : g);
    }
    return out;
  }

  /// Gradients keyed by every tensor of `store`; parameters that never entered
  /// the graph get zeros.
  Gradients gradients_for(const ParameterStore& store) const {
    Gradients out;
    for (const auto& [name, tensor] : store) {
      auto it = params_.find(name);
      if (it != params_.end() && !grad(it->second).empty())
        out.emplace(name, grad(it->second));
      else
        out.emplace(name, Tensor(tensor.shape(), 0.0));
    }
    return out;
  }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad;
  };

  NodeId push(OpKind kind, Tensor value, std::vector<NodeId> inputs,
              BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{kind, std::move(value), std::move(inputs),
                          std::move(backward), requires_grad});
    return NodeId{nodes_.size() - 1};
  }

  void check(NodeId id) const {
    if (id.index >= nodes_.size())
      throw std::out_of_range("Graph: unknown node " + std::to_string(id.index));
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, NodeId> params_;
  bool track_ = true;
};

}  // namespace seqadv
