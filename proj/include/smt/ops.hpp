#pragma once

#include <span>
#include <vector>

#include "smt/graph.hpp"

namespace smt {

/// Default layer-norm epsilon.
inline constexpr Real kLayerNormEps = 1e-6;

// Every function below appends one record to `g` and returns its output.
// Shapes must match exactly; the only broadcast is add_bias over leading dims.

/// [m x k] . [k x n] -> [m x n]
Var matmul(Graph& g, Var a, Var b);
/// [m x n] -> [n x m]
Var transpose(Graph& g, Var a);
Var add(Graph& g, Var a, Var b);
/// Adds a length-n vector to every row of a [... x n] tensor.
Var add_bias(Graph& g, Var x, Var bias);
/// Elementwise product.
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, Real factor);
/// Row-wise softmax over the last dimension, max-subtracted.
Var softmax_lastdim(Graph& g, Var x);
/// Normalizes every last-dim slice to zero mean / unit (biased) variance,
/// then applies gamma and beta.
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, Real eps = kLayerNormEps);
/// Exact erf-form GELU: x * Phi(x).
Var gelu(Graph& g, Var x);
/// Rows [start, start+count) of a rank-2 tensor.
Var slice_rows(Graph& g, Var x, std::size_t start, std::size_t count);
/// Columns [start, start+count) of a rank-2 tensor.
Var slice_cols(Graph& g, Var x, std::size_t start, std::size_t count);
/// Concatenation along the first axis; trailing dimensions must agree.
Var concat(Graph& g, std::span<const Var> parts);
/// Concatenation of rank-2 tensors along columns.
Var concat_cols(Graph& g, std::span<const Var> parts);
Var reshape(Graph& g, Var x, Shape shape);
/// Sum of all entries, shape [1].
Var sum(Graph& g, Var x);
/// Mean squared error between two length-B vectors, shape [1].
Var mse_loss(Graph& g, Var pred, Var target);

}  // namespace smt
