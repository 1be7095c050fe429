#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smt/tensor.hpp"

namespace smt {

/// Handle to a node inside a Graph.
struct Var {
  std::size_t id = 0;
};

enum class OpKind {
  Constant,
  Leaf,
  Parameter,
  Matmul,
  Transpose,
  Add,
  AddBias,
  Mul,
  Scale,
  Softmax,
  LayerNorm,
  Gelu,
  SliceRows,
  SliceCols,
  Concat,
  ConcatCols,
  Reshape,
  Sum,
  MseLoss,
};

const char* op_name(OpKind kind);

/// One operation record on the tape. Inputs always have smaller ids than the
/// record itself, so the tape is topologically ordered by construction.
struct Node {
  OpKind kind = OpKind::Constant;
  std::vector<std::size_t> inputs;
  Tensor value;                    // empty for Parameter nodes
  std::vector<Real> grad;          // empty until touched by backward
  std::vector<Real> saved;         // op-specific activations
  std::vector<std::size_t> ints;   // op-specific integer arguments
  Real scalar = 0;                 // op-specific real argument
  Tensor* param = nullptr;         // bound tensor for Parameter nodes
  bool requires_grad = false;
};

/// Reverse-mode tape. Build it by calling the free functions in ops.hpp, then
/// call backward() on a scalar result.
///
/// Parameter nodes refer to tensors owned elsewhere; backward() adds their
/// gradient into `Tensor::grad` unless accumulation is switched off.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  /// Leaf that never receives a gradient.
  Var constant(Tensor t);
  /// Leaf whose gradient is tracked (inspect with grad()).
  Var leaf(Tensor t);
  /// Leaf bound to an external tensor; its gradient is accumulated into `p.grad`.
  Var parameter(Tensor& p);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() w.r.t. `v`; all zeros when untouched.
  std::vector<Real> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  void backward(Var loss);
  /// Clears node gradients (bound parameter tensors are left alone).
  void zero_grad();

  void set_accumulate_parameters(bool on) { accumulate_params_ = on; }
  bool accumulate_parameters() const { return accumulate_params_; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Used by op implementations.
  Var push(Node n);
  Node& mutable_node(std::size_t id) { return nodes_[id]; }
  /// Gradient buffer of `id`, allocated (zero) on first use.
  std::vector<Real>& grad_buffer(std::size_t id);

 private:
  std::vector<Node> nodes_;
  bool accumulate_params_ = true;
};

namespace detail {
/// Propagates `node.grad` to the gradients of its inputs.
void backward_node(Graph& g, std::size_t id);
}  // namespace detail

}  // namespace smt
