#include "smt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "smt/error.hpp"

namespace smt {
namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const std::vector<Real>& v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::vector<Real>& v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

const Tensor& val(const Graph& g, std::size_t id) { return g.value(Var{id}); }

bool any_requires_grad(const Graph& g, std::initializer_list<Var> vars) {
  for (auto v : vars) {
    if (g.requires_grad(v)) return true;
  }
  return false;
}

Node make_node(OpKind kind, std::initializer_list<Var> inputs, const Graph& g) {
  Node n;
  n.kind = kind;
  for (auto v : inputs) n.inputs.push_back(v.id);
  n.requires_grad = any_requires_grad(g, inputs);
  return n;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_to_string(t.shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) +
                         " vs " + shape_to_string(b.shape));
  }
}

Real gaussian_cdf(Real x) { return Real{0.5} * (Real{1} + std::erf(x / std::numbers::sqrt2_v<Real>)); }

Real gaussian_pdf(Real x) {
  return std::exp(Real{-0.5} * x * x) / std::sqrt(Real{2} * std::numbers::pi_v<Real>);
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  if (ta.shape[1] != tb.shape[0]) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(ta.shape) +
                         " . " + shape_to_string(tb.shape));
  }
  const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Node node = make_node(OpKind::Matmul, {a, b}, g);
  node.value = Tensor({m, n});
  as_matrix(node.value.values, m, n).noalias() =
      as_matrix(ta.values, m, k) * as_matrix(tb.values, k, n);
  return g.push(std::move(node));
}

Var transpose(Graph& g, Var a) {
  const Tensor& ta = g.value(a);
  require_rank2(ta, "transpose");
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  Node node = make_node(OpKind::Transpose, {a}, g);
  node.value = Tensor({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) node.value.values[j * m + i] = ta.values[i * n + j];
  return g.push(std::move(node));
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require_same_shape(ta, tb, "add");
  Node node = make_node(OpKind::Add, {a, b}, g);
  node.value = Tensor(ta.shape);
  for (std::size_t i = 0; i < ta.size(); ++i) node.value.values[i] = ta.values[i] + tb.values[i];
  return g.push(std::move(node));
}

Var add_bias(Graph& g, Var x, Var bias) {
  const Tensor& tx = g.value(x);
  const Tensor& tb = g.value(bias);
  if (tb.rank() != 1 || tb.size() != tx.cols()) {
    throw DimensionError("add_bias: bias " + shape_to_string(tb.shape) +
                         " does not match last dimension of " + shape_to_string(tx.shape));
  }
  Node node = make_node(OpKind::AddBias, {x, bias}, g);
  node.value = Tensor(tx.shape);
  const std::size_t rows = tx.rows(), cols = tx.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      node.value.values[r * cols + c] = tx.values[r * cols + c] + tb.values[c];
  return g.push(std::move(node));
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require_same_shape(ta, tb, "mul");
  Node node = make_node(OpKind::Mul, {a, b}, g);
  node.value = Tensor(ta.shape);
  for (std::size_t i = 0; i < ta.size(); ++i) node.value.values[i] = ta.values[i] * tb.values[i];
  return g.push(std::move(node));
}

Var scale(Graph& g, Var x, Real factor) {
  const Tensor& tx = g.value(x);
  Node node = make_node(OpKind::Scale, {x}, g);
  node.scalar = factor;
  node.value = Tensor(tx.shape);
  for (std::size_t i = 0; i < tx.size(); ++i) node.value.values[i] = tx.values[i] * factor;
  return g.push(std::move(node));
}

Var softmax_lastdim(Graph& g, Var x) {
  const Tensor& tx = g.value(x);
  if (tx.cols() == 0) throw DimensionError("softmax_lastdim: empty last dimension");
  Node node = make_node(OpKind::Softmax, {x}, g);
  node.value = Tensor(tx.shape);
  const std::size_t rows = tx.rows(), cols = tx.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = tx.values.data() + r * cols;
    Real* out = node.value.values.data() + r * cols;
    const Real mx = *std::max_element(in, in + cols);
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  return g.push(std::move(node));
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, Real eps) {
  const Tensor& tx = g.value(x);
  const Tensor& tg = g.value(gamma);
  const Tensor& tb = g.value(beta);
  const std::size_t rows = tx.rows(), cols = tx.cols();
  if (cols == 0) throw DimensionError("layer_norm: empty last dimension");
  if (tg.shape != Shape{cols} || tb.shape != Shape{cols}) {
    throw DimensionError("layer_norm: gamma " + shape_to_string(tg.shape) + " / beta " +
                         shape_to_string(tb.shape) + " do not match " + shape_to_string(tx.shape));
  }
  if (!(eps > 0)) throw DomainError("layer_norm: eps must be positive");
  Node node = make_node(OpKind::LayerNorm, {x, gamma, beta}, g);
  node.scalar = eps;
  node.value = Tensor(tx.shape);
  // saved = [x_hat (rows*cols) | inv_std (rows)]
  node.saved.resize(rows * cols + rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = tx.values.data() + r * cols;
    Real mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<Real>(cols);
    Real var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<Real>(cols);
    const Real inv_std = Real{1} / std::sqrt(var + eps);
    node.saved[rows * cols + r] = inv_std;
    for (std::size_t c = 0; c < cols; ++c) {
      const Real xh = (in[c] - mean) * inv_std;
      node.saved[r * cols + c] = xh;
      node.value.values[r * cols + c] = xh * tg.values[c] + tb.values[c];
    }
  }
  return g.push(std::move(node));
}

Var gelu(Graph& g, Var x) {
  const Tensor& tx = g.value(x);
  Node node = make_node(OpKind::Gelu, {x}, g);
  node.value = Tensor(tx.shape);
  for (std::size_t i = 0; i < tx.size(); ++i)
    node.value.values[i] = tx.values[i] * gaussian_cdf(tx.values[i]);
  return g.push(std::move(node));
}

Var slice_rows(Graph& g, Var x, std::size_t start, std::size_t count) {
  const Tensor& tx = g.value(x);
  require_rank2(tx, "slice_rows");
  if (count == 0 || start + count > tx.shape[0]) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_to_string(tx.shape));
  }
  const std::size_t cols = tx.shape[1];
  Node node = make_node(OpKind::SliceRows, {x}, g);
  node.ints = {start, count};
  node.value = Tensor({count, cols});
  std::copy_n(tx.values.begin() + static_cast<std::ptrdiff_t>(start * cols), count * cols,
              node.value.values.begin());
  return g.push(std::move(node));
}

Var slice_cols(Graph& g, Var x, std::size_t start, std::size_t count) {
  const Tensor& tx = g.value(x);
  require_rank2(tx, "slice_cols");
  if (count == 0 || start + count > tx.shape[1]) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_to_string(tx.shape));
  }
  const std::size_t rows = tx.shape[0], cols = tx.shape[1];
  Node node = make_node(OpKind::SliceCols, {x}, g);
  node.ints = {start, count};
  node.value = Tensor({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c)
      node.value.values[r * count + c] = tx.values[r * cols + start + c];
  return g.push(std::move(node));
}

Var concat(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = g.value(parts[0]);
  if (first.rank() == 0) throw DimensionError("concat: rank-0 input");
  Shape trailing(first.shape.begin() + 1, first.shape.end());
  std::size_t lead = 0;
  Node node;
  node.kind = OpKind::Concat;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    if (t.rank() != first.rank() || !std::equal(trailing.begin(), trailing.end(), t.shape.begin() + 1)) {
      throw DimensionError("concat: " + shape_to_string(t.shape) + " incompatible with " +
                           shape_to_string(first.shape));
    }
    lead += t.shape[0];
    node.inputs.push_back(p.id);
    node.requires_grad = node.requires_grad || g.requires_grad(p);
  }
  Shape out_shape{lead};
  out_shape.insert(out_shape.end(), trailing.begin(), trailing.end());
  node.value = Tensor(out_shape);
  std::size_t offset = 0;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    std::copy(t.values.begin(), t.values.end(), node.value.values.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += t.size();
  }
  return g.push(std::move(node));
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Tensor& first = g.value(parts[0]);
  require_rank2(first, "concat_cols");
  const std::size_t rows = first.shape[0];
  std::size_t total_cols = 0;
  Node node;
  node.kind = OpKind::ConcatCols;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    require_rank2(t, "concat_cols");
    if (t.shape[0] != rows) {
      throw DimensionError("concat_cols: " + shape_to_string(t.shape) + " incompatible with " +
                           shape_to_string(first.shape));
    }
    total_cols += t.shape[1];
    node.inputs.push_back(p.id);
    node.requires_grad = node.requires_grad || g.requires_grad(p);
  }
  node.value = Tensor({rows, total_cols});
  std::size_t col0 = 0;
  for (auto p : parts) {
    const Tensor& t = g.value(p);
    const std::size_t c = t.shape[1];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.values.begin() + static_cast<std::ptrdiff_t>(r * c), c,
                  node.value.values.begin() + static_cast<std::ptrdiff_t>(r * total_cols + col0));
    col0 += c;
  }
  return g.push(std::move(node));
}

Var reshape(Graph& g, Var x, Shape shape) {
  const Tensor& tx = g.value(x);
  if (shape_size(shape) != tx.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(tx.shape) + " as " +
                         shape_to_string(shape));
  }
  Node node = make_node(OpKind::Reshape, {x}, g);
  node.value = Tensor(std::move(shape), tx.values);
  return g.push(std::move(node));
}

Var sum(Graph& g, Var x) {
  const Tensor& tx = g.value(x);
  Node node = make_node(OpKind::Sum, {x}, g);
  Real total = 0;
  for (auto v : tx.values) total += v;
  node.value = Tensor::scalar(total);
  return g.push(std::move(node));
}

Var mse_loss(Graph& g, Var pred, Var target) {
  const Tensor& tp = g.value(pred);
  const Tensor& tt = g.value(target);
  if (tp.rank() != 1 || tt.rank() != 1 || tp.size() != tt.size() || tp.size() == 0) {
    throw DimensionError("mse_loss: prediction " + shape_to_string(tp.shape) + " and target " +
                         shape_to_string(tt.shape) + " must be equal-length vectors");
  }
  Node node = make_node(OpKind::MseLoss, {pred, target}, g);
  Real total = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    const Real d = tp.values[i] - tt.values[i];
    total += d * d;
  }
  node.value = Tensor::scalar(total / static_cast<Real>(tp.size()));
  return g.push(std::move(node));
}

namespace detail {

void backward_node(Graph& g, std::size_t id) {
  // grad_buffer() never reallocates the node list, so references into this
  // node stay valid below.
  Node& node = g.mutable_node(id);
  const std::vector<Real>& gout = node.grad;
  auto wants = [&](std::size_t input) { return g.node(input).requires_grad; };

  switch (node.kind) {
    case OpKind::Constant:
    case OpKind::Leaf:
    case OpKind::Parameter:
      return;

    case OpKind::Matmul: {
      const std::size_t ia = node.inputs[0], ib = node.inputs[1];
      const Tensor& ta = val(g, ia);
      const Tensor& tb = val(g, ib);
      const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
      auto dc = as_matrix(gout, m, n);
      if (wants(ia)) {
        as_matrix(g.grad_buffer(ia), m, k).noalias() += dc * as_matrix(tb.values, k, n).transpose();
      }
      if (wants(ib)) {
        as_matrix(g.grad_buffer(ib), k, n).noalias() += as_matrix(ta.values, m, k).transpose() * dc;
      }
      return;
    }

    case OpKind::Transpose: {
      const std::size_t ia = node.inputs[0];
      if (!wants(ia)) return;
      const std::size_t m = val(g, ia).shape[0], n = val(g, ia).shape[1];
      auto& gi = g.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gi[i * n + j] += gout[j * m + i];
      return;
    }

    case OpKind::Add: {
      for (auto in : node.inputs) {
        if (!wants(in)) continue;
        auto& gi = g.grad_buffer(in);
        for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
      }
      return;
    }

    case OpKind::AddBias: {
      const std::size_t ix = node.inputs[0], ib = node.inputs[1];
      const std::size_t cols = node.value.cols(), rows = node.value.rows();
      if (wants(ix)) {
        auto& gi = g.grad_buffer(ix);
        for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
      }
      if (wants(ib)) {
        auto& gb = g.grad_buffer(ib);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += gout[r * cols + c];
      }
      return;
    }

    case OpKind::Mul: {
      const std::size_t ia = node.inputs[0], ib = node.inputs[1];
      const Tensor& ta = val(g, ia);
      const Tensor& tb = val(g, ib);
      if (wants(ia)) {
        auto& ga = g.grad_buffer(ia);
        for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * tb.values[i];
      }
      if (wants(ib)) {
        auto& gb = g.grad_buffer(ib);
        for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * ta.values[i];
      }
      return;
    }

    case OpKind::Scale: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      auto& gi = g.grad_buffer(ix);
      for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i] * node.scalar;
      return;
    }

    case OpKind::Softmax: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      auto& gi = g.grad_buffer(ix);
      const std::size_t rows = node.value.rows(), cols = node.value.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = node.value.values.data() + r * cols;
        const Real* dy = gout.data() + r * cols;
        Real dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += y[c] * (dy[c] - dot);
      }
      return;
    }

    case OpKind::LayerNorm: {
      const std::size_t ix = node.inputs[0], ig = node.inputs[1], ib = node.inputs[2];
      const Tensor& tg = val(g, ig);
      const std::size_t rows = node.value.rows(), cols = node.value.cols();
      const Real* xhat = node.saved.data();
      const Real* inv_std = node.saved.data() + rows * cols;
      if (wants(ig)) {
        auto& gg = g.grad_buffer(ig);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gg[c] += gout[r * cols + c] * xhat[r * cols + c];
      }
      if (wants(ib)) {
        auto& gb = g.grad_buffer(ib);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += gout[r * cols + c];
      }
      if (wants(ix)) {
        auto& gi = g.grad_buffer(ix);
        const Real inv_n = Real{1} / static_cast<Real>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          Real mean_d = 0, mean_dx = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            const Real d = gout[r * cols + c] * tg.values[c];
            mean_d += d;
            mean_dx += d * xhat[r * cols + c];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t c = 0; c < cols; ++c) {
            const Real d = gout[r * cols + c] * tg.values[c];
            gi[r * cols + c] += inv_std[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
          }
        }
      }
      return;
    }

    case OpKind::Gelu: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      const Tensor& tx = val(g, ix);
      auto& gi = g.grad_buffer(ix);
      for (std::size_t i = 0; i < gout.size(); ++i) {
        const Real x = tx.values[i];
        gi[i] += gout[i] * (gaussian_cdf(x) + x * gaussian_pdf(x));
      }
      return;
    }

    case OpKind::SliceRows: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      const std::size_t cols = node.value.shape[1];
      auto& gi = g.grad_buffer(ix);
      const std::size_t offset = node.ints[0] * cols;
      for (std::size_t i = 0; i < gout.size(); ++i) gi[offset + i] += gout[i];
      return;
    }

    case OpKind::SliceCols: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      const std::size_t in_cols = val(g, ix).shape[1];
      const std::size_t start = node.ints[0], count = node.ints[1];
      const std::size_t rows = node.value.shape[0];
      auto& gi = g.grad_buffer(ix);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) gi[r * in_cols + start + c] += gout[r * count + c];
      return;
    }

    case OpKind::Concat: {
      std::size_t offset = 0;
      for (auto in : node.inputs) {
        const std::size_t n = val(g, in).size();
        if (wants(in)) {
          auto& gi = g.grad_buffer(in);
          for (std::size_t i = 0; i < n; ++i) gi[i] += gout[offset + i];
        }
        offset += n;
      }
      return;
    }

    case OpKind::ConcatCols: {
      const std::size_t rows = node.value.shape[0], total = node.value.shape[1];
      std::size_t col0 = 0;
      for (auto in : node.inputs) {
        const std::size_t c = val(g, in).shape[1];
        if (wants(in)) {
          auto& gi = g.grad_buffer(in);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gi[r * c + j] += gout[r * total + col0 + j];
        }
        col0 += c;
      }
      return;
    }

    case OpKind::Reshape: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      auto& gi = g.grad_buffer(ix);
      for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
      return;
    }

    case OpKind::Sum: {
      const std::size_t ix = node.inputs[0];
      if (!wants(ix)) return;
      auto& gi = g.grad_buffer(ix);
      for (auto& v : gi) v += gout[0];
      return;
    }

    case OpKind::MseLoss: {
      const std::size_t ip = node.inputs[0], it = node.inputs[1];
      const Tensor& tp = val(g, ip);
      const Tensor& tt = val(g, it);
      const Real coeff = Real{2} * gout[0] / static_cast<Real>(tp.size());
      if (wants(ip)) {
        auto& gp = g.grad_buffer(ip);
        for (std::size_t i = 0; i < tp.size(); ++i) gp[i] += coeff * (tp.values[i] - tt.values[i]);
      }
      if (wants(it)) {
        auto& gt = g.grad_buffer(it);
        for (std::size_t i = 0; i < tp.size(); ++i) gt[i] -= coeff * (tp.values[i] - tt.values[i]);
      }
      return;
    }
  }
}

}  // namespace detail
}  // namespace smt
