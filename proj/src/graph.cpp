#include "smt/graph.hpp"

#include "smt/error.hpp"

namespace smt {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Leaf: return "leaf";
    case OpKind::Parameter: return "parameter";
    case OpKind::Matmul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Gelu: return "gelu";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::Concat: return "concat";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Reshape: return "reshape";
    case OpKind::Sum: return "sum";
    case OpKind::MseLoss: return "mse_loss";
  }
  return "unknown";
}

Var Graph::constant(Tensor t) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(t);
  n.value.clear_grad();
  return push(std::move(n));
}

Var Graph::leaf(Tensor t) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(t);
  n.value.clear_grad();
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::parameter(Tensor& p) {
  Node n;
  n.kind = OpKind::Parameter;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::push(Node n) {
  for (auto in : n.inputs) {
    if (in >= nodes_.size()) throw ContractError("graph input refers to a later node");
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.kind == OpKind::Parameter ? *n.param : n.value;
}

std::vector<Real> Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.grad.empty()) return n.grad;
  return std::vector<Real>(value(v).size(), Real{0});
}

std::vector<Real>& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    n.grad.assign(value(Var{id}).size(), Real{0});
  }
  return n.grad;
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n.grad.clear();
}

void Graph::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw ContractError("backward: unknown loss node");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_to_string(value(loss).shape));
  }
  grad_buffer(loss.id)[0] += Real{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.kind == OpKind::Parameter) {
      if (accumulate_params_) {
        Tensor& p = *n.param;
        if (!p.has_grad()) p.zero_grad();
        for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
      }
      continue;
    }
    if (n.kind == OpKind::Leaf || n.kind == OpKind::Constant) continue;
    detail::backward_node(*this, i);
  }
}

}  // namespace smt
