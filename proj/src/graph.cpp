#include "ftrl/graph.hpp"

#include <string>

namespace ftrl {

const Tensor& Var::value() const { return graph->value(*this); }

namespace {

class Accumulator final : public GradSink {
 public:
  explicit Accumulator(std::size_t n) : grads_(n), engaged_(n, false) {}

  void add(int node_id, Tensor grad) override {
    const auto idx = static_cast<std::size_t>(node_id);
    if (!engaged_[idx]) {
      grads_[idx] = std::move(grad);
      engaged_[idx] = true;
      return;
    }
    Tensor& acc = grads_[idx];
    if (!acc.same_shape(grad)) {
      throw ContractViolation("gradient shape mismatch during accumulation: " +
                              acc.shape_str() + " vs " + grad.shape_str());
    }
    auto dst = acc.mutable_data();
    const auto src = grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  bool engaged(int id) const { return engaged_[static_cast<std::size_t>(id)]; }
  Tensor& at(int id) { return grads_[static_cast<std::size_t>(id)]; }

 private:
  std::vector<Tensor> grads_;
  std::vector<bool> engaged_;
};

}  // namespace

Var Graph::leaf(Tensor value) {
  const bool rg = value.requires_grad;
  nodes_.push_back(Node{"leaf", {}, std::move(value), rg, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

Var Graph::constant(Tensor value) {
  value.requires_grad = false;
  return leaf(std::move(value));
}

Var Graph::param(Tensor value) {
  value.requires_grad = true;
  return leaf(std::move(value));
}

const Tensor& Graph::value(Var v) const {
  check_var(v);
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Graph::needs_grad(Var v) const {
  check_var(v);
  return nodes_[static_cast<std::size_t>(v.id)].needs_grad;
}

const char* Graph::op_name(Var v) const {
  check_var(v);
  return nodes_[static_cast<std::size_t>(v.id)].op;
}

Var Graph::add_node(const char* op, std::vector<int> inputs, Tensor value,
                    BackwardFn backward) {
  bool needs = false;
  for (int id : inputs) {
    needs = needs || nodes_[static_cast<std::size_t>(id)].needs_grad;
  }
  value.require_finite(std::string(op) + " output");
  value.requires_grad = needs;
  nodes_.push_back(Node{op, std::move(inputs), std::move(value), needs,
                        needs ? std::move(backward) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

void Graph::check_var(Var v) const {
  if (v.graph != this || v.id < 0 ||
      v.id >= static_cast<int>(nodes_.size())) {
    throw ContractViolation("Var does not belong to this graph");
  }
}

std::vector<Tensor> Graph::grad(Var scalar_output, std::span<const Var> wrt) const {
  check_var(scalar_output);
  const Node& out = nodes_[static_cast<std::size_t>(scalar_output.id)];
  if (out.value.numel() != 1) {
    throw ContractViolation("grad() needs a scalar output, got shape " +
                            out.value.shape_str());
  }
  for (Var v : wrt) check_var(v);

  Accumulator acc(nodes_.size());
  acc.add(scalar_output.id, Tensor::full(out.value.shape(), 1.0));

  for (int id = scalar_output.id; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad || !acc.engaged(id) || !node.backward) continue;
    node.backward(*this, node.inputs, node.value, acc.at(id), acc);
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (Var v : wrt) {
    if (acc.engaged(v.id)) {
      result.push_back(acc.at(v.id));
    } else {
      // Disconnected from the output: zero gradient of matching shape.
      result.push_back(Tensor::zeros(value(v).shape()));
    }
  }
  return result;
}

std::vector<Tensor> Graph::grad(Var scalar_output,
                                std::initializer_list<Var> wrt) const {
  return grad(scalar_output, std::span<const Var>(wrt.begin(), wrt.size()));
}

}  // namespace ftrl
