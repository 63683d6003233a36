#ifndef FTRL_GRAPH_HPP
#define FTRL_GRAPH_HPP

#include <functional>
#include <span>
#include <vector>

#include "ftrl/tensor.hpp"

namespace ftrl {

class Graph;

/// Lightweight handle to a node in a Graph.
struct Var {
  int id = -1;
  Graph* graph = nullptr;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
};

/// Receives gradient contributions during the backward pass.
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual void add(int node_id, Tensor grad) = 0;
};

/// Backward rule of one node: given the node's input ids, its forward value
/// and the gradient flowing into it, push gradients to the inputs.
using BackwardFn = std::function<void(const Graph& g, std::span<const int> inputs,
                                      const Tensor& out_value, const Tensor& out_grad,
                                      GradSink& sink)>;

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order
/// and the backward pass walks them in exact reverse insertion order, so two
/// identical graphs produce bit-identical gradients. grad() does not mutate
/// the graph; it can be called repeatedly with different outputs.
///
/// Single-threaded by construction: one graph per thread of work.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding a value; participates in differentiation iff
  /// value.requires_grad is set.
  Var leaf(Tensor value);
  /// Leaf that never receives gradient (inputs, targets, masks).
  Var constant(Tensor value);
  /// Leaf that always receives gradient (parameters).
  Var param(Tensor value);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// d(scalar_output)/d(wrt_i) for every requested node. The output must have
  /// exactly one element. A wrt node the output does not depend on yields a
  /// zero tensor of the node's shape.
  std::vector<Tensor> grad(Var scalar_output, std::span<const Var> wrt) const;
  std::vector<Tensor> grad(Var scalar_output, std::initializer_list<Var> wrt) const;

  /// Used by the op library; not part of the public modelling surface.
  Var add_node(const char* op, std::vector<int> inputs, Tensor value,
               BackwardFn backward);

  const char* op_name(Var v) const;

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    Tensor value;
    bool needs_grad;
    BackwardFn backward;
  };

  void check_var(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace ftrl

#endif  // FTRL_GRAPH_HPP
